use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sudokuformer_core::datagen::{
    build_dataset, dataset_file_name, load_jsonl, DatasetManifest, DatasetSpec, SetKind,
    MANIFEST_FILE,
};
use sudokuformer_core::seqformat::{decode, encode, vocab_hash, FormatOptions, TargetMode};
use sudokuformer_core::{fixtures, PuzzleInstance, SplitCondition, SplitSpec, Task};
use sudokuformer_harness::matrix::{mean_ood, matrix_datasets};
use sudokuformer_harness::presets::{desk_model, desk_pe_effect, desk_regime, desk_trend};
use sudokuformer_harness::{
    evaluate, probe_attention, run_condition_matrix, train_with, write_probe,
    EvalOptions, EvalReport, MatrixSpec, Regime, RegimeSpec, TrainData,
};
use sudokuformer_model::{checkpoint, ModelConfig, PeScheme};

const OUT_ENV: &str = "SUDOKUFORMER_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";
const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Parser)]
#[command(name = "sudokuformer", version, about = "6x6 Sudoku technique learning with small transformers")]
struct Cli {
    /// Default root for outputs when a command is given no `--out`.
    #[arg(long, env = OUT_ENV, default_value = DEFAULT_OUT_ROOT, global = true)]
    out_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory.
    Gen(GenArgs),
    /// Train a model, resuming from the latest checkpoint in the output directory.
    Train(TrainArgs),
    /// Score a checkpoint on test sets.
    Eval(EvalArgs),
    /// Attention maps of one Hidden Single step under digit rotation.
    Probe(ProbeArgs),
    /// Pretty-print instances.
    Inspect(InspectArgs),
    /// Train and score a grid of conditions.
    Matrix(MatrixArgs),
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_list(s: &str) -> Result<Vec<u8>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<u8>().map_err(|e| format!("`{v}`: {e}")))
        .collect()
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct Resolved<'a, T> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a T,
}

fn write_resolved<T: Serialize>(dir: &Path, command: &'static str, seed: u64, config: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(
        &dir.join(RESOLVED_CONFIG),
        &Resolved {
            tool: "sudokuformer",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            config,
        },
    )
}

// ---------------------------------------------------------------- gen

#[derive(Args)]
struct GenArgs {
    /// JSON dataset spec; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = parse_serde::<SplitCondition>)]
    condition: Option<SplitCondition>,
    /// Training rows or digits, e.g. `1,2,3,4`.
    #[arg(long, value_parser = parse_list)]
    train_set: Option<Vec<u8>>,
    /// Picks instance counts: HS only, or HS plus FH and NS.
    #[arg(long, value_parser = parse_serde::<Regime>)]
    regime: Option<Regime>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ns_queries: Option<usize>,
    #[arg(long)]
    ns_padded: bool,
    #[arg(long)]
    hs_train: Option<usize>,
    #[arg(long)]
    fh_train: Option<usize>,
    #[arg(long)]
    ns_train: Option<usize>,
    #[arg(long)]
    wd_test: Option<usize>,
    #[arg(long)]
    ood_test: Option<usize>,
    /// Generate every dataset a matrix preset reads (`trend` or `pe-effect`)
    /// under the output directory.
    #[arg(long, conflicts_with_all = ["config", "condition", "train_set", "regime", "ns_queries", "ns_padded"])]
    for_matrix: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    dataset: DatasetSpec,
    out: PathBuf,
}

fn gen_spec(args: &GenArgs) -> Result<DatasetSpec> {
    let mut spec = match &args.config {
        Some(path) => read_json::<DatasetSpec>(path)?,
        None => {
            let split = SplitSpec::with_defaults(args.condition.unwrap_or(SplitCondition::None));
            match args.regime.unwrap_or(Regime::HsOnly) {
                Regime::HsOnly => DatasetSpec::hs_only(split, 0),
                _ => DatasetSpec::multi_task(split, 0),
            }
        }
    };
    if args.config.is_some() {
        if let Some(cond) = args.condition {
            spec.split = SplitSpec::with_defaults(cond);
        }
    }
    if let Some(set) = &args.train_set {
        spec.split = SplitSpec::new(spec.split.condition, set.clone())?;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(q) = args.ns_queries {
        spec.ns_queries = q;
    }
    if args.ns_padded {
        spec.ns_padded = true;
    }
    let counts = [
        (&mut spec.hs_train, args.hs_train),
        (&mut spec.fh_train, args.fh_train),
        (&mut spec.ns_train, args.ns_train),
        (&mut spec.wd_test, args.wd_test),
        (&mut spec.ood_test, args.ood_test),
    ];
    for (field, value) in counts {
        if let Some(v) = value {
            *field = v;
        }
    }
    Ok(spec)
}

fn gen_one(spec: &DatasetSpec, out: &Path) -> Result<()> {
    if out.join(MANIFEST_FILE).exists() {
        bail!("{} already holds a dataset", out.display());
    }
    let manifest = build_dataset(spec, out)?;
    write_resolved(
        out,
        "gen",
        spec.seed,
        &GenConfig {
            dataset: spec.clone(),
            out: out.to_path_buf(),
        },
    )?;
    println!("dataset {} ({})", out.display(), spec.split.condition);
    for f in &manifest.files {
        println!(
            "  {:<16} {:>7} instances  yes {:.3}  sha256 {}",
            f.file, f.count, f.yes_fraction, &f.sha256[..16]
        );
    }
    println!("manifest digest {}", manifest.digest());
    Ok(())
}

fn preset_matrix(name: &str, data_root: &Path, out_root: &Path) -> Result<MatrixSpec> {
    match name {
        "trend" => Ok(desk_trend(data_root, out_root)),
        "pe-effect" => Ok(desk_pe_effect(data_root, out_root)),
        other => bail!("unknown matrix preset `{other}` (expected trend or pe-effect)"),
    }
}

fn cmd_gen(args: GenArgs, out_root: &Path) -> Result<()> {
    if let Some(preset) = &args.for_matrix {
        let root = args.out.clone().unwrap_or_else(|| out_root.join("data"));
        let matrix = preset_matrix(preset, &root, &root)?;
        for (dir, mut spec) in matrix_datasets(&matrix, args.seed.unwrap_or(0)) {
            if dir.join(MANIFEST_FILE).exists() {
                println!("dataset {} exists, skipping", dir.display());
                continue;
            }
            let counts = [
                (&mut spec.hs_train, args.hs_train),
                (&mut spec.fh_train, args.fh_train),
                (&mut spec.ns_train, args.ns_train),
                (&mut spec.wd_test, args.wd_test),
                (&mut spec.ood_test, args.ood_test),
            ];
            for (field, value) in counts {
                if let (Some(v), true) = (value, *field > 0) {
                    *field = v;
                }
            }
            gen_one(&spec, &dir)?;
        }
        return Ok(());
    }
    let spec = gen_spec(&args)?;
    let out = args.out.clone().unwrap_or_else(|| {
        let kind = if spec.fh_train + spec.ns_train > 0 { "multi_task" } else { "hs_only" };
        out_root.join("data").join(format!("{}_{kind}", spec.split.condition))
    });
    gen_one(&spec, &out)
}

// ---------------------------------------------------------------- train

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON with `model` and `regime` objects; flags override its fields.
    #[arg(long, conflicts_with = "desk_scale")]
    config: Option<PathBuf>,
    /// Reduced model and run length.
    #[arg(long)]
    desk_scale: bool,
    #[arg(long, value_parser = parse_serde::<Regime>)]
    regime: Option<Regime>,
    #[arg(long, value_parser = parse_serde::<PeScheme>)]
    pe: Option<PeScheme>,
    #[arg(long)]
    updates: Option<u64>,
    #[arg(long)]
    phase1: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    micro_batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Overrides the padding recorded in the dataset manifest.
    #[arg(long)]
    ns_padded: Option<bool>,
    #[arg(long, value_parser = parse_serde::<TargetMode>)]
    target: Option<TargetMode>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainFile {
    model: ModelConfig,
    regime: RegimeSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfig {
    model: ModelConfig,
    regime: RegimeSpec,
    data: PathBuf,
    out: PathBuf,
    desk_scale: bool,
}

fn check_manifest(dir: &Path) -> Result<DatasetManifest> {
    if !dir.join(MANIFEST_FILE).exists() {
        bail!("no dataset at {}", dir.display());
    }
    let manifest = DatasetManifest::load(dir)?;
    if manifest.vocab_hash != vocab_hash() {
        bail!(
            "dataset {} was built for vocabulary {}, this build uses {}",
            dir.display(),
            manifest.vocab_hash,
            vocab_hash()
        );
    }
    Ok(manifest)
}

fn train_config(args: &TrainArgs, manifest: &DatasetManifest, out_root: &Path) -> Result<TrainConfig> {
    let regime_kind = args.regime.unwrap_or_default();
    let base = match &args.config {
        Some(path) => read_json::<TrainFile>(path)?,
        None if args.desk_scale => TrainFile {
            model: desk_model(),
            regime: desk_regime(regime_kind),
        },
        None => TrainFile::default(),
    };
    let TrainFile { mut model, mut regime } = base;
    if let Some(r) = args.regime {
        regime.regime = r;
    }
    if let Some(pe) = args.pe {
        model.pe_scheme = pe;
    }
    if args.d_model.is_some() || args.layers.is_some() || args.heads.is_some() || args.d_ff.is_some() {
        let sized = ModelConfig::sized(
            args.d_model.unwrap_or(model.d_model),
            args.layers.unwrap_or(model.n_layers),
            args.heads.unwrap_or(model.n_heads),
            args.d_ff.unwrap_or(model.d_ff),
        );
        model = ModelConfig {
            d_model: sized.d_model,
            n_layers: sized.n_layers,
            n_heads: sized.n_heads,
            d_ff: sized.d_ff,
            coord_emb_dim: sized.coord_emb_dim,
            ..model
        };
    }
    if let Some(v) = args.updates {
        regime.total_updates = v;
    }
    if let Some(v) = args.phase1 {
        regime.curriculum_phase1 = v;
    }
    if let Some(v) = args.batch {
        regime.batch_per_task = v;
    }
    if let Some(v) = args.micro_batch {
        regime.micro_batch = v;
    }
    if let Some(v) = args.lr {
        regime.lr = v;
    }
    if let Some(v) = args.eval_every {
        regime.eval_every = v;
    }
    if let Some(v) = args.checkpoint_every {
        regime.checkpoint_every = v;
    }
    if let Some(seed) = args.seed {
        regime.seed = seed;
        model.seed = seed;
    }
    regime.format.ns_padded = args.ns_padded.unwrap_or(manifest.spec.ns_padded);
    if let Some(t) = args.target {
        regime.format.target = t;
    }
    model.validate()?;
    regime.validate()?;
    let out = args.out.clone().unwrap_or_else(|| {
        out_root.join("train").join(format!(
            "{}_{}_seed{}",
            regime.regime.as_str(),
            model.pe_scheme.as_str(),
            regime.seed
        ))
    });
    Ok(TrainConfig {
        model,
        regime,
        data: args.data.clone(),
        out,
        desk_scale: args.desk_scale,
    })
}

fn cmd_train(args: TrainArgs, out_root: &Path) -> Result<()> {
    let manifest = check_manifest(&args.data)?;
    let cfg = train_config(&args, &manifest, out_root)?;
    for &task in cfg.regime.regime.tasks() {
        if manifest.entry(SetKind::Train, task).is_none_or(|e| e.count == 0) {
            bail!(
                "dataset {} has no {} training set for the {} regime",
                cfg.data.display(),
                task.as_str(),
                cfg.regime.regime.as_str()
            );
        }
    }
    write_resolved(&cfg.out, "train", cfg.regime.seed, &cfg)?;
    let data = TrainData::load(&cfg.data, cfg.regime.regime)?;
    let total = cfg.regime.total_updates;
    let every = (total / 100).max(1);
    let start = Instant::now();
    let outcome = train_with(&cfg.model, &cfg.regime, &data, &cfg.out, &mut |r| {
        if r.update % every == 0 || r.update == total {
            eprintln!(
                "update {}/{total}  loss {:.5}  {:.0}s",
                r.update,
                r.total,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    if let Some(from) = outcome.resumed_from {
        println!("resumed from update {from}");
    }
    println!(
        "trained {} ({} parameters) to update {} in {}",
        cfg.model.pe_scheme.as_str(),
        outcome.model.param_count(),
        outcome.last_update,
        cfg.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- eval

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated sets among train, wd_test, ood_test.
    #[arg(long, value_delimiter = ',', value_parser = parse_serde::<SetKind>, default_value = "wd_test,ood_test")]
    sets: Vec<SetKind>,
    #[arg(long, value_parser = parse_serde::<TargetMode>, default_value = "full_sequence")]
    mode: TargetMode,
    /// Overrides the padding recorded in the dataset manifest.
    #[arg(long)]
    ns_padded: Option<bool>,
    /// Score at most this many instances per task and set.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    srl_seed: u64,
    #[arg(long, default_value_t = 64)]
    chunk: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalConfig {
    checkpoint: PathBuf,
    data: PathBuf,
    out: PathBuf,
    sets: Vec<SetKind>,
    limit: Option<usize>,
    options: EvalOptions,
}

fn cmd_eval(args: EvalArgs, out_root: &Path) -> Result<()> {
    let manifest = check_manifest(&args.data)?;
    let sidecar = checkpoint::read_sidecar(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    if sidecar.vocab_hash != manifest.vocab_hash {
        bail!(
            "vocabulary mismatch: checkpoint {} has {}, dataset {} has {}",
            args.checkpoint.display(),
            sidecar.vocab_hash,
            args.data.display(),
            manifest.vocab_hash
        );
    }
    let (model, _) = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("reading checkpoint {}", args.checkpoint.display()))?;
    let cfg = EvalConfig {
        checkpoint: args.checkpoint.clone(),
        data: args.data.clone(),
        out: args.out.clone().unwrap_or_else(|| out_root.join("eval")),
        sets: args.sets.clone(),
        limit: args.limit,
        options: EvalOptions {
            format: FormatOptions {
                ns_padded: args.ns_padded.unwrap_or(manifest.spec.ns_padded),
                target: args.mode,
                ..FormatOptions::default()
            },
            srl_seed: args.srl_seed,
            chunk: args.chunk,
        },
    };
    write_resolved(&cfg.out, "eval", cfg.options.srl_seed, &cfg)?;
    for &set in &cfg.sets {
        let mut instances = Vec::new();
        for task in Task::ALL {
            if manifest.entry(set, task).is_none_or(|e| e.count == 0) {
                continue;
            }
            let mut part = load_jsonl(&cfg.data.join(dataset_file_name(set, task)))?;
            if let Some(n) = cfg.limit {
                part.truncate(n);
            }
            instances.extend(part);
        }
        if instances.is_empty() {
            bail!("dataset {} has no {} instances", cfg.data.display(), set.as_str());
        }
        let report = evaluate(&model, &instances, set.as_str(), &cfg.options)?;
        write_json(&cfg.out.join(format!("report_{}.json", set.as_str())), &report)?;
        let mut csv = format!("{}\n", EvalReport::CSV_HEADER);
        for row in report.csv_rows() {
            csv.push_str(&row);
            csv.push('\n');
        }
        fs::write(cfg.out.join(format!("report_{}.csv", set.as_str())), csv)?;
        println!(
            "{:<8} n={:<6} final {:.4}  full {:.4}",
            set.as_str(),
            report.count,
            report.final_accuracy,
            report.full_accuracy
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- probe

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Built-in puzzle: `hs`, `fh`, `ns` or `ns5` (five naked single queries)
    #[arg(long, conflicts_with = "instances")]
    fixture: Option<String>,
    /// JSONL file of instances.
    #[arg(long, requires = "index")]
    instances: Option<PathBuf>,
    #[arg(long)]
    index: Option<usize>,
    /// 1-based step line whose column-number token is the query.
    #[arg(long, default_value_t = 2)]
    step: usize,
    #[arg(long, default_value_t = 0)]
    srl_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbeConfig {
    checkpoint: PathBuf,
    out: PathBuf,
    fixture: Option<String>,
    instances: Option<PathBuf>,
    index: Option<usize>,
    step: usize,
    srl_seed: u64,
}

fn fixture(name: &str) -> Result<PuzzleInstance> {
    match name {
        "hs" => Ok(fixtures::example_hidden_single()),
        "fh" => Ok(fixtures::example_full_house()),
        "ns" => Ok(fixtures::example_naked_single()),
        "ns5" => Ok(fixtures::example_naked_single_five()),
        other => bail!("unknown fixture `{other}` (hs, fh, ns, ns5)"),
    }
}

fn pick_instance(file: &Path, index: usize) -> Result<PuzzleInstance> {
    let mut all = load_jsonl(file)?;
    if index >= all.len() {
        bail!("{} has {} instances, no index {index}", file.display(), all.len());
    }
    Ok(all.swap_remove(index))
}

fn cmd_probe(args: ProbeArgs, out_root: &Path) -> Result<()> {
    let cfg = ProbeConfig {
        checkpoint: args.checkpoint,
        out: args.out.unwrap_or_else(|| out_root.join("probe")),
        fixture: match (&args.fixture, &args.instances) {
            (None, None) => Some("hs".into()),
            (f, _) => f.clone(),
        },
        instances: args.instances,
        index: args.index,
        step: args.step,
        srl_seed: args.srl_seed,
    };
    let inst = match (&cfg.fixture, &cfg.instances, cfg.index) {
        (Some(name), _, _) => fixture(name)?,
        (None, Some(file), Some(i)) => pick_instance(file, i)?,
        _ => bail!("probe needs --fixture or --instances with --index"),
    };
    if inst.task != Task::HiddenSingle {
        bail!("probe needs a hidden single instance, got {}", inst.task.as_str());
    }
    let (model, _) = checkpoint::load(&cfg.checkpoint)
        .with_context(|| format!("reading checkpoint {}", cfg.checkpoint.display()))?;
    let result = probe_attention(&model, &inst, cfg.step, cfg.srl_seed)?;
    write_resolved(&cfg.out, "probe", cfg.srl_seed, &cfg)?;
    write_probe(&result, &cfg.out)?;
    println!(
        "step {} at r{}c{}, query position {}, {} maps in {}",
        result.step_index,
        result.step_cell[0],
        result.step_cell[1],
        result.query_position,
        result.maps.len(),
        cfg.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------- inspect

#[derive(Args)]
struct InspectArgs {
    /// JSONL instance file. Without one, `--fixture` is shown.
    file: Option<PathBuf>,
    #[arg(long, conflicts_with = "file")]
    fixture: Option<String>,
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long)]
    ns_padded: bool,
    /// Print the record as JSON instead.
    #[arg(long)]
    json: bool,
}

fn show(inst: &PuzzleInstance, ns_padded: bool) -> Result<String> {
    let mut out = format!("task   {}\n", inst.task.as_str());
    if let (Some(goal), Some(kind)) = (inst.goal, inst.house_kind) {
        out += &format!("goal   {goal} ({kind} house)\n");
    }
    if inst.task == Task::NakedSingle {
        let q: Vec<String> = inst.queries.iter().map(|c| c.to_string()).collect();
        out += &format!("query  {}\n", q.join(", "));
    }
    out += &format!("digit  {}\n", inst.digit);
    if let Some(label) = inst.final_label() {
        out += &format!("label  {}\n", if label { "yes" } else { "no" });
    }
    if !inst.split_tags.is_empty() {
        out += &format!("tags   {}\n", inst.split_tags.join(" "));
    }
    for line in inst.grid.to_string().lines() {
        out += &format!("  {}\n", line.chars().map(String::from).collect::<Vec<_>>().join(" "));
    }
    let seq = encode(
        inst,
        &FormatOptions {
            ns_padded,
            ..FormatOptions::default()
        },
    )?;
    out += &format!("prompt {}\n", decode(&seq.ids[..seq.boundary])?);
    out += &format!("target {}\n", decode(&seq.ids[seq.boundary..])?);
    Ok(out)
}

fn cmd_inspect(args: InspectArgs) -> Result<()> {
    let instances = match (&args.file, &args.fixture) {
        (Some(file), _) => load_jsonl(file)?
            .into_iter()
            .skip(args.start)
            .take(args.count)
            .collect(),
        (None, Some(name)) => vec![fixture(name)?],
        (None, None) => bail!("give an instance file or --fixture"),
    };
    if instances.is_empty() {
        bail!("no instances at index {}", args.start);
    }
    for (i, inst) in instances.iter().enumerate() {
        if args.json {
            println!("{}", inst.to_json_line());
        } else {
            if i > 0 {
                println!();
            }
            print!("{}", show(inst, args.ns_padded)?);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- matrix

#[derive(Args)]
struct MatrixArgs {
    /// `trend` or `pe-effect`.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON matrix spec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root holding the dataset directories.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds replacing the spec's.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    updates: Option<u64>,
}

fn cmd_matrix(args: MatrixArgs, out_root: &Path) -> Result<()> {
    let data_root = args.data.clone().unwrap_or_else(|| out_root.join("data"));
    let mut spec = match (&args.preset, &args.config) {
        (Some(name), _) => {
            let out = out_root.join("matrix").join(name);
            preset_matrix(name, &data_root, &out)?
        }
        (None, Some(path)) => read_json::<MatrixSpec>(path)?,
        (None, None) => bail!("give --preset or --config"),
    };
    if let Some(d) = args.data {
        spec.data_root = d;
    }
    if let Some(o) = args.out {
        spec.out_root = o;
    }
    if let Some(seeds) = args.seeds {
        spec.seeds = seeds;
    }
    if let Some(u) = args.updates {
        spec.regime.total_updates = u;
        spec.regime.curriculum_phase1 = spec.regime.curriculum_phase1.min(u);
    }
    let seed = spec.seeds.first().copied().unwrap_or(0);
    write_resolved(&spec.out_root, "matrix", seed, &spec)?;
    let rows = run_condition_matrix(&spec).map_err(|e| anyhow!(e))?;
    for cell in &spec.cells {
        if let Some(m) = mean_ood(&rows, cell) {
            println!("{:<40} mean OOD final {:.4}", cell.label(), m);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.out_root;
    match cli.command {
        Command::Gen(a) => cmd_gen(a, &root),
        Command::Train(a) => cmd_train(a, &root),
        Command::Eval(a) => cmd_eval(a, &root),
        Command::Probe(a) => cmd_probe(a, &root),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Matrix(a) => cmd_matrix(a, &root),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
