//! Rejection-sampled puzzle generators and dataset construction.
//!
//! Every instance is drawn from its own generator seeded by
//! `(dataset seed, stream, index)`, so output is identical no matter how the
//! index range is spread across worker threads.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::GenError;
use crate::grid::{house_of, neighborhood, CellRef, Grid, HouseKind, CELLS, SIZE};
use crate::instance::{PuzzleInstance, Task};
use crate::oracle::can_contain;
use crate::split::{Role, SplitSpec};

/// Rejections allowed per instance before giving up.
pub const MAX_REJECTIONS: usize = 10_000;
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Stateless seed mixing (SplitMix64 finalizer over the three inputs).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn instance_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}

fn choose<T: Copy, R: Rng>(rng: &mut R, items: &[T]) -> T {
    *items.choose(rng).expect("non-empty choice set")
}

/// Places up to `count` random digits, keeping the grid consistent and
/// honouring `allowed(cell, digit)`.
fn random_fills<R: Rng>(
    rng: &mut R,
    grid: &mut Grid,
    count: usize,
    allowed: impl Fn(CellRef, u8) -> bool,
) {
    let mut placed = 0;
    let mut tries = 0;
    while placed < count && tries < count * 20 {
        tries += 1;
        let cell = CellRef::from_index(rng.gen_range(0..CELLS));
        let digit = rng.gen_range(1..=SIZE as u8);
        if grid.is_empty_at(cell)
            && allowed(cell, digit)
            && grid.placement_keeps_consistency(cell, digit)
        {
            grid.set(cell, digit).expect("digit in range");
            placed += 1;
        }
    }
}

fn exhausted(context: impl Into<String>) -> GenError {
    GenError::BudgetExhausted {
        attempts: MAX_REJECTIONS,
        context: context.into(),
    }
}

/// Tries to stop `target` from admitting `digit`, either by filling it or by
/// placing `digit` in one of its houses away from the goal's neighborhood.
fn block_cell<R: Rng>(
    rng: &mut R,
    grid: &mut Grid,
    target: CellRef,
    digit: u8,
    goal_peers: &[CellRef],
    goal: CellRef,
) -> bool {
    let fill_first = rng.gen_bool(0.5);
    for fill in [fill_first, !fill_first] {
        if fill {
            let mut others: Vec<u8> = (1..=SIZE as u8).filter(|&d| d != digit).collect();
            others.shuffle(rng);
            if let Some(d) = others
                .into_iter()
                .find(|&d| grid.placement_keeps_consistency(target, d))
            {
                grid.set(target, d).expect("digit in range");
                return true;
            }
        } else {
            let mut spots: Vec<CellRef> = neighborhood(target)
                .into_iter()
                .filter(|&c| {
                    c != goal
                        && grid.is_empty_at(c)
                        && !goal_peers.contains(&c)
                        && grid.placement_keeps_consistency(c, digit)
                })
                .collect();
            spots.shuffle(rng);
            if let Some(&spot) = spots.first() {
                grid.set(spot, digit).expect("digit in range");
                return true;
            }
        }
    }
    false
}

/// Samples a Hidden Single whose oracle label equals `target_label` and whose
/// goal row, house kind and digit respect `split` for the given role.
pub fn gen_hidden_single<R: Rng>(
    rng: &mut R,
    split: &SplitSpec,
    role: Role,
    target_label: bool,
) -> Result<PuzzleInstance, GenError> {
    let rows = split.goal_rows(role)?;
    let kinds = split.house_kinds(role)?;
    let digits = split.digits_for(role)?;
    for _ in 0..MAX_REJECTIONS {
        let goal = CellRef::new(choose(rng, &rows), rng.gen_range(1..=SIZE as u8))?;
        let kind = choose(rng, &kinds);
        let digit = choose(rng, &digits);
        let peers = neighborhood(goal);
        let mut grid = Grid::empty();
        let fills = rng.gen_range(4..=14);
        random_fills(rng, &mut grid, fills, |cell, d| {
            cell != goal && !(d == digit && peers.contains(&cell))
        });
        if target_label {
            let house = house_of(goal, kind);
            let mut blocked = true;
            for &other in house.iter().filter(|&&c| c != goal) {
                if can_contain(&grid, other, digit).0
                    && !block_cell(rng, &mut grid, other, digit, &peers, goal)
                {
                    blocked = false;
                    break;
                }
            }
            if !blocked {
                continue;
            }
        }
        match PuzzleInstance::hidden_single(grid, goal, kind, digit) {
            Ok(inst) if inst.final_label() == Some(target_label) => return Ok(inst),
            _ => continue,
        }
    }
    Err(exhausted(format!("hidden single, label {target_label}")))
}

/// Samples a Full House with no split restriction.
pub fn gen_full_house<R: Rng>(rng: &mut R, target_label: bool) -> Result<PuzzleInstance, GenError> {
    for _ in 0..MAX_REJECTIONS {
        let goal = CellRef::from_index(rng.gen_range(0..CELLS));
        let kind = choose(rng, &HouseKind::ALL);
        let digit = rng.gen_range(1..=SIZE as u8);
        let house = house_of(goal, kind);
        let others: Vec<CellRef> = house.iter().copied().filter(|&c| c != goal).collect();
        let mut grid = Grid::empty();

        let mut house_digits: Vec<u8> = if target_label || rng.gen_bool(0.5) {
            // Every other cell filled; for a "no" the candidate is among them.
            let missing = if target_label {
                digit
            } else {
                choose(
                    rng,
                    &(1..=SIZE as u8).filter(|&d| d != digit).collect::<Vec<_>>(),
                )
            };
            (1..=SIZE as u8).filter(|&d| d != missing).collect()
        } else {
            // At least one competitor left empty.
            let filled = rng.gen_range(0..others.len());
            let mut pool: Vec<u8> = (1..=SIZE as u8).collect();
            pool.shuffle(rng);
            pool.truncate(filled);
            pool
        };
        house_digits.shuffle(rng);
        let mut slots = others.clone();
        slots.shuffle(rng);
        for (&cell, &d) in slots.iter().zip(&house_digits) {
            grid.set(cell, d)?;
        }

        let peers = neighborhood(goal);
        let fills = rng.gen_range(2..=12);
        random_fills(rng, &mut grid, fills, |cell, d| {
            !house.contains(&cell) && !(d == digit && peers.contains(&cell))
        });
        match PuzzleInstance::full_house(grid, goal, kind, digit) {
            Ok(inst) if inst.final_label() == Some(target_label) => return Ok(inst),
            _ => continue,
        }
    }
    Err(exhausted(format!("full house, label {target_label}")))
}

/// Samples a Naked Single query set: a random consistent grid, a digit and
/// `query_count` distinct cells.
pub fn gen_naked_single<R: Rng>(rng: &mut R, query_count: usize) -> Result<PuzzleInstance, GenError> {
    if query_count != 1 && query_count != 5 {
        return Err(GenError::InvalidRequest(format!(
            "naked single query count must be 1 or 5, got {query_count}"
        )));
    }
    let mut grid = Grid::empty();
    let fills = rng.gen_range(4..=16);
    random_fills(rng, &mut grid, fills, |_, _| true);
    let digit = rng.gen_range(1..=SIZE as u8);
    let queries = sample(rng, CELLS, query_count)
        .into_iter()
        .map(CellRef::from_index)
        .collect();
    Ok(PuzzleInstance::naked_single(grid, digit, queries)?)
}

/// Instance counts and options for one dataset directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub split: SplitSpec,
    pub seed: u64,
    pub hs_train: usize,
    pub fh_train: usize,
    pub ns_train: usize,
    /// Held-out within-distribution instances per task present in training.
    pub wd_test: usize,
    /// Out-of-distribution Hidden Single instances.
    pub ood_test: usize,
    pub ns_queries: usize,
    /// Whether NS prompts are to be padded into alignment. Recorded for the
    /// encoder; the instances themselves are the same either way.
    pub ns_padded: bool,
}

impl DatasetSpec {
    /// 110,000 Hidden Single instances and nothing else.
    pub fn hs_only(split: SplitSpec, seed: u64) -> Self {
        Self {
            split,
            seed,
            hs_train: 110_000,
            fh_train: 0,
            ns_train: 0,
            wd_test: 2_000,
            ood_test: 2_000,
            ns_queries: 1,
            ns_padded: false,
        }
    }

    /// 50,000 HS plus 30,000 each of FH and NS, used by the simultaneous and
    /// curriculum regimes.
    pub fn multi_task(split: SplitSpec, seed: u64) -> Self {
        Self {
            hs_train: 50_000,
            fh_train: 30_000,
            ns_train: 30_000,
            ..Self::hs_only(split, seed)
        }
    }

    pub fn train_count(&self, task: Task) -> usize {
        match task {
            Task::HiddenSingle => self.hs_train,
            Task::FullHouse => self.fh_train,
            Task::NakedSingle => self.ns_train,
        }
    }
}

/// Which file a set of instances belongs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Train,
    WdTest,
    OodTest,
}

impl SetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SetKind::Train => "train",
            SetKind::WdTest => "wd_test",
            SetKind::OodTest => "ood_test",
        }
    }

    fn stream(self, task: Task) -> u64 {
        let set = match self {
            SetKind::Train => 1,
            SetKind::WdTest => 2,
            SetKind::OodTest => 3,
        };
        let task = match task {
            Task::HiddenSingle => 1,
            Task::FullHouse => 2,
            Task::NakedSingle => 3,
        };
        set * 16 + task
    }
}

pub fn dataset_file_name(set: SetKind, task: Task) -> String {
    format!("{}_{}.jsonl", set.as_str(), task.short())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub file: String,
    pub set: SetKind,
    pub task: Task,
    pub count: usize,
    /// Fraction of "yes" answers (final labels for HS/FH, all queries for NS).
    pub yes_fraction: f64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// Hash of the token vocabulary the instances are meant to be encoded with.
    pub vocab_hash: String,
    pub spec: DatasetSpec,
    pub files: Vec<FileEntry>,
}

impl DatasetManifest {
    pub fn entry(&self, set: SetKind, task: Task) -> Option<&FileEntry> {
        self.files.iter().find(|f| f.set == set && f.task == task)
    }

    pub fn load(dir: &Path) -> Result<Self, GenError> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Digest over the manifest's canonical JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("manifest serializes");
        hex_digest(&json)
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn generate_one(
    spec: &SplitSpec,
    seed: u64,
    set: SetKind,
    task: Task,
    ns_queries: usize,
    index: u64,
) -> Result<PuzzleInstance, GenError> {
    let mut rng = instance_rng(seed, set.stream(task), index);
    let target = index.is_multiple_of(2);
    let role = if set == SetKind::OodTest {
        Role::Ood
    } else {
        Role::Train
    };
    let inst = match task {
        Task::HiddenSingle => gen_hidden_single(&mut rng, spec, role, target)?,
        Task::FullHouse => gen_full_house(&mut rng, target)?,
        Task::NakedSingle => gen_naked_single(&mut rng, ns_queries)?,
    };
    Ok(inst.with_tags([set.as_str(), spec.condition.as_str()]))
}

fn generate_range(
    spec: &DatasetSpec,
    set: SetKind,
    task: Task,
    range: std::ops::Range<u64>,
) -> Result<Vec<PuzzleInstance>, GenError> {
    range
        .into_par_iter()
        .map(|i| generate_one(&spec.split, spec.seed, set, task, spec.ns_queries, i))
        .collect()
}

/// Generates the instances of one file. WD test sets exclude any instance
/// that also occurs in `exclude`.
pub fn generate_set(
    spec: &DatasetSpec,
    set: SetKind,
    task: Task,
    count: usize,
    exclude: Option<&HashSet<PuzzleInstance>>,
) -> Result<Vec<PuzzleInstance>, GenError> {
    let Some(exclude) = exclude else {
        return generate_range(spec, set, task, 0..count as u64);
    };
    let mut out = Vec::with_capacity(count);
    let mut next = 0u64;
    while out.len() < count {
        let want = (count - out.len()) as u64;
        let chunk = generate_range(spec, set, task, next..next + want)?;
        next += want;
        // Candidates already seen in training are dropped and later indices
        // fill the gap.
        out.extend(chunk.into_iter().filter(|inst| {
            let mut key = inst.clone();
            key.split_tags = vec![SetKind::Train.as_str().into(), spec.split.condition.as_str().into()];
            !exclude.contains(&key)
        }));
        if next > (count as u64) * 4 + 64 {
            return Err(exhausted(format!(
                "{} {}: too many collisions with the training set",
                set.as_str(),
                task
            )));
        }
    }
    out.truncate(count);
    Ok(out)
}

fn yes_fraction(instances: &[PuzzleInstance]) -> f64 {
    let (mut yes, mut total) = (0usize, 0usize);
    for inst in instances {
        for step in match inst.task {
            Task::NakedSingle => inst.steps.iter().map(|s| s.answer).collect::<Vec<_>>(),
            _ => inst.final_label().into_iter().collect(),
        } {
            yes += step as usize;
            total += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        yes as f64 / total as f64
    }
}

pub fn write_jsonl(path: &Path, instances: &[PuzzleInstance]) -> Result<String, GenError> {
    let mut bytes = Vec::new();
    for inst in instances {
        bytes.extend_from_slice(inst.to_json_line().as_bytes());
        bytes.push(b'\n');
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(hex_digest(&bytes))
}

/// Reads a dataset file, re-verifying every instance against the oracle.
pub fn load_jsonl(path: &Path) -> Result<Vec<PuzzleInstance>, GenError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wrap = |source| GenError::Verification {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        };
        let inst = PuzzleInstance::from_json_line(&line).map_err(wrap)?;
        inst.verify().map_err(wrap)?;
        out.push(inst);
    }
    Ok(out)
}

/// Builds every file of a dataset under `out_dir` and writes the manifest.
pub fn build_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<DatasetManifest, GenError> {
    if spec.ns_queries != 1 && spec.ns_queries != 5 {
        return Err(GenError::InvalidRequest(format!(
            "ns_queries must be 1 or 5, got {}",
            spec.ns_queries
        )));
    }
    if out_dir.join(MANIFEST_FILE).exists() {
        return Err(GenError::DuplicateOutput(out_dir.to_path_buf()));
    }
    fs::create_dir_all(out_dir)?;

    let mut files = Vec::new();
    let mut emit = |set: SetKind, task: Task, instances: &[PuzzleInstance]| -> Result<(), GenError> {
        let name = dataset_file_name(set, task);
        let path: PathBuf = out_dir.join(&name);
        let sha256 = write_jsonl(&path, instances)?;
        files.push(FileEntry {
            file: name,
            set,
            task,
            count: instances.len(),
            yes_fraction: yes_fraction(instances),
            sha256,
        });
        Ok(())
    };

    for task in Task::ALL {
        let count = spec.train_count(task);
        if count == 0 {
            continue;
        }
        let train = generate_set(spec, SetKind::Train, task, count, None)?;
        let seen: HashSet<PuzzleInstance> = train.iter().cloned().collect();
        emit(SetKind::Train, task, &train)?;
        drop(train);
        let wd = generate_set(spec, SetKind::WdTest, task, spec.wd_test, Some(&seen))?;
        emit(SetKind::WdTest, task, &wd)?;
    }
    if spec.split.has_ood() && spec.ood_test > 0 {
        let ood = generate_set(spec, SetKind::OodTest, Task::HiddenSingle, spec.ood_test, None)?;
        emit(SetKind::OodTest, Task::HiddenSingle, &ood)?;
    }

    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        vocab_hash: crate::seqformat::vocab_hash(),
        spec: spec.clone(),
        files,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(out_dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(manifest)
}

/// Loads one file of a dataset directory by set and task.
pub fn load_set(dir: &Path, set: SetKind, task: Task) -> Result<Vec<PuzzleInstance>, GenError> {
    load_jsonl(&dir.join(dataset_file_name(set, task)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::rotate_digits;
    use crate::split::SplitCondition;

    fn rng(i: u64) -> ChaCha8Rng {
        instance_rng(7, 99, i)
    }

    #[test]
    fn hidden_single_respects_split() {
        let rows = SplitSpec::rows(&[1, 2, 3, 4]).unwrap();
        let cols = SplitSpec::columns();
        let digits = SplitSpec::digits(&[1, 2, 3, 4]).unwrap();
        for i in 0..200 {
            let label = i % 2 == 0;
            let inst = gen_hidden_single(&mut rng(i), &rows, Role::Train, label).unwrap();
            assert!(inst.goal.unwrap().row() <= 4);
            assert_eq!(inst.final_label(), Some(label));
            let inst = gen_hidden_single(&mut rng(i), &rows, Role::Ood, label).unwrap();
            assert!(inst.goal.unwrap().row() >= 5);
            let inst = gen_hidden_single(&mut rng(i), &cols, Role::Train, label).unwrap();
            assert_eq!(inst.house_kind, Some(HouseKind::Row));
            let inst = gen_hidden_single(&mut rng(i), &cols, Role::Ood, label).unwrap();
            assert_eq!(inst.house_kind, Some(HouseKind::Column));
            let inst = gen_hidden_single(&mut rng(i), &digits, Role::Ood, label).unwrap();
            assert!(inst.digit >= 5);
            inst.verify().unwrap();
        }
    }

    #[test]
    fn full_house_yes_has_one_gap() {
        for i in 0..200 {
            let inst = gen_full_house(&mut rng(i), true).unwrap();
            let goal = inst.goal.unwrap();
            let house = house_of(goal, inst.house_kind.unwrap());
            let filled: Vec<u8> = house.iter().map(|&c| inst.grid.get(c)).filter(|&d| d != 0).collect();
            assert_eq!(filled.len(), 5);
            assert!(!filled.contains(&inst.digit));
            let no = gen_full_house(&mut rng(i + 1000), false).unwrap();
            assert_eq!(no.final_label(), Some(false));
        }
    }

    #[test]
    fn full_house_labels_alternate_evenly() {
        let yes = (0..1000u64)
            .filter(|&i| {
                gen_full_house(&mut rng(i), i % 2 == 0)
                    .unwrap()
                    .final_label()
                    .unwrap()
            })
            .count();
        assert_eq!(yes, 500);
    }

    #[test]
    fn naked_single_queries() {
        assert!(gen_naked_single(&mut rng(0), 3).is_err());
        let mut mixed = false;
        for i in 0..200 {
            let inst = gen_naked_single(&mut rng(i), 5).unwrap();
            assert_eq!(inst.queries.len(), 5);
            let distinct: HashSet<_> = inst.queries.iter().collect();
            assert_eq!(distinct.len(), 5);
            for (q, s) in inst.queries.iter().zip(&inst.steps) {
                assert_eq!(s.answer, can_contain(&inst.grid, *q, inst.digit).0);
                if !inst.grid.is_empty_at(*q) {
                    assert!(!s.answer);
                }
            }
            let yes = inst.steps.iter().filter(|s| s.answer).count();
            mixed |= yes > 0 && yes < 5;
        }
        assert!(mixed);
    }

    #[test]
    fn rotation_preserves_generated_answers() {
        for i in 0..100 {
            let inst = gen_hidden_single(&mut rng(i), &SplitSpec::none(), Role::Train, i % 2 == 0)
                .unwrap();
            for shift in 1..=5 {
                rotate_digits(&inst, shift).unwrap().verify().unwrap();
            }
        }
    }

    fn small_spec(condition: SplitCondition) -> DatasetSpec {
        DatasetSpec {
            hs_train: 60,
            fh_train: 40,
            ns_train: 40,
            wd_test: 20,
            ood_test: 20,
            ns_queries: 5,
            ..DatasetSpec::multi_task(SplitSpec::with_defaults(condition), 11)
        }
    }

    #[test]
    fn build_is_deterministic_and_sound() {
        let spec = small_spec(SplitCondition::Rows);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = build_dataset(&spec, a.path()).unwrap();
        let mb = build_dataset(&spec, b.path()).unwrap();
        assert_eq!(ma, mb);
        for f in &ma.files {
            let x = fs::read(a.path().join(&f.file)).unwrap();
            let y = fs::read(b.path().join(&f.file)).unwrap();
            assert_eq!(x, y, "{} differs", f.file);
        }
        let train = load_set(a.path(), SetKind::Train, Task::HiddenSingle).unwrap();
        assert_eq!(train.len(), 60);
        assert!(train.iter().all(|i| spec.split.conforms(i)));
        let ood = load_set(a.path(), SetKind::OodTest, Task::HiddenSingle).unwrap();
        assert!(ood.iter().all(|i| !spec.split.conforms(i)));
        let entry = ma.entry(SetKind::Train, Task::HiddenSingle).unwrap();
        assert!((entry.yes_fraction - 0.5).abs() < 1e-12);
        assert!(matches!(
            build_dataset(&spec, a.path()),
            Err(GenError::DuplicateOutput(_))
        ));
    }

    #[test]
    fn wd_test_is_disjoint_from_train() {
        let spec = small_spec(SplitCondition::Columns);
        let dir = tempfile::tempdir().unwrap();
        build_dataset(&spec, dir.path()).unwrap();
        for task in Task::ALL {
            let strip = |mut i: PuzzleInstance| {
                i.split_tags.clear();
                i
            };
            let train: HashSet<_> = load_set(dir.path(), SetKind::Train, task)
                .unwrap()
                .into_iter()
                .map(strip)
                .collect();
            for inst in load_set(dir.path(), SetKind::WdTest, task).unwrap() {
                assert!(!train.contains(&strip(inst)));
            }
        }
    }

    #[test]
    fn corrupted_file_is_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut inst = crate::fixtures::example_hidden_single();
        let path = dir.path().join("x.jsonl");
        inst.steps[0].answer = true;
        fs::write(&path, inst.to_json_line() + "\n").unwrap();
        assert!(matches!(
            load_jsonl(&path),
            Err(GenError::Verification { line: 1, .. })
        ));
    }
}
