use std::fs;
use std::path::Path;

use sudokuformer_core::datagen::{build_dataset, DatasetSpec};
use sudokuformer_core::{SplitCondition, SplitSpec, Task};
use sudokuformer_harness::train::{checkpoint_name, latest_checkpoint, EVAL_LOG, FINAL_CHECKPOINT, TRAIN_LOG};
use sudokuformer_harness::{train, HarnessError, Regime, RegimeSpec, TrainData};
use sudokuformer_model::{ModelConfig, PeScheme};

fn tiny_model(pe: PeScheme) -> ModelConfig {
    ModelConfig {
        pe_scheme: pe,
        seed: 3,
        ..ModelConfig::sized(16, 1, 2, 32)
    }
}

fn spec(regime: Regime, updates: u64) -> RegimeSpec {
    RegimeSpec {
        regime,
        total_updates: updates,
        curriculum_phase1: 3,
        batch_per_task: 5,
        micro_batch: 2,
        eval_every: 0,
        checkpoint_every: 0,
        seed: 1,
        ..RegimeSpec::default()
    }
}

fn dataset(dir: &Path, multi: bool) {
    let split = SplitSpec::with_defaults(SplitCondition::Columns);
    let base = if multi {
        DatasetSpec::multi_task(split, 2)
    } else {
        DatasetSpec::hs_only(split, 2)
    };
    let spec = DatasetSpec {
        hs_train: 23,
        fh_train: if multi { 17 } else { 0 },
        ns_train: if multi { 13 } else { 0 },
        wd_test: 6,
        ood_test: 6,
        ..base
    };
    build_dataset(&spec, dir).unwrap();
}

/// Rows of the training log as (update, hs, fh, ns) presence flags.
fn logged(dir: &Path) -> Vec<(u64, [bool; 3])> {
    fs::read_to_string(dir.join(TRAIN_LOG))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), [!f[1].is_empty(), !f[2].is_empty(), !f[3].is_empty()])
        })
        .collect()
}

#[test]
fn curriculum_adds_hidden_single_after_phase_one() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, true);
    let data = TrainData::load(&data_dir, Regime::Curriculum).unwrap();
    let out = tmp.path().join("run");
    train(&tiny_model(PeScheme::Sinusoidal), &spec(Regime::Curriculum, 6), &data, &out).unwrap();
    let rows = logged(&out);
    assert_eq!(rows.len(), 6);
    for (update, [hs, fh, ns]) in rows {
        assert_eq!(hs, update > 3, "update {update}");
        assert!(fh && ns);
    }
}

#[test]
fn simultaneous_trains_all_tasks_every_update() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, true);
    let data = TrainData::load(&data_dir, Regime::Simultaneous).unwrap();
    let out = tmp.path().join("run");
    train(&tiny_model(PeScheme::Alibi), &spec(Regime::Simultaneous, 3), &data, &out).unwrap();
    assert!(logged(&out).iter().all(|(_, flags)| flags == &[true, true, true]));
}

#[test]
fn hs_only_reads_only_hidden_single_files() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, true);
    for f in ["train_fh.jsonl", "train_ns.jsonl", "wd_test_fh.jsonl", "wd_test_ns.jsonl"] {
        fs::write(data_dir.join(f), "not json\n").unwrap();
    }
    let data = TrainData::load(&data_dir, Regime::HsOnly).unwrap();
    assert_eq!(data.train.keys().copied().collect::<Vec<_>>(), vec![Task::HiddenSingle]);
    let out = tmp.path().join("run");
    train(&tiny_model(PeScheme::Sinusoidal), &spec(Regime::HsOnly, 3), &data, &out).unwrap();
    assert!(logged(&out).iter().all(|(_, flags)| flags == &[true, false, false]));

    assert!(TrainData::load(&data_dir, Regime::Simultaneous).is_err());
}

#[test]
fn missing_regime_data_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, false);
    assert!(matches!(
        TrainData::load(&data_dir, Regime::Curriculum),
        Err(HarnessError::MissingDataset(_))
    ));
    let mut data = TrainData::load(&data_dir, Regime::HsOnly).unwrap();
    data.train.clear();
    let err = train(&tiny_model(PeScheme::None), &spec(Regime::HsOnly, 1), &data, tmp.path());
    assert!(err.is_err());
}

#[test]
fn identical_seeds_give_identical_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, true);
    let data = TrainData::load(&data_dir, Regime::Simultaneous).unwrap();
    let cfg = tiny_model(PeScheme::Srl);
    let mut s = spec(Regime::Simultaneous, 4);
    s.eval_every = 2;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    train(&cfg, &s, &data, &a).unwrap();
    train(&cfg, &s, &data, &b).unwrap();
    for name in [TRAIN_LOG, EVAL_LOG, FINAL_CHECKPOINT] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let eval_rows = fs::read_to_string(a.join(EVAL_LOG)).unwrap().lines().count();
    assert_eq!(eval_rows, 1 + 2 * 3);

    let c = tmp.path().join("c");
    s.seed = 2;
    train(&cfg, &s, &data, &c).unwrap();
    assert_ne!(fs::read(a.join(TRAIN_LOG)).unwrap(), fs::read(c.join(TRAIN_LOG)).unwrap());
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, true);
    let data = TrainData::load(&data_dir, Regime::Curriculum).unwrap();
    let cfg = tiny_model(PeScheme::Srl);
    let mut s = spec(Regime::Curriculum, 8);
    s.checkpoint_every = 3;
    s.eval_every = 4;

    let whole = tmp.path().join("whole");
    train(&cfg, &s, &data, &whole).unwrap();

    let cut = tmp.path().join("cut");
    train(&cfg, &s, &data, &cut).unwrap();
    // Drop everything written after update 3 except the logs, which the
    // resumed run must truncate itself.
    for u in [6, 8] {
        let base = cut.join(checkpoint_name(u));
        for ext in ["sdok", "json", "state.json"] {
            let _ = fs::remove_file(base.with_extension(ext));
        }
    }
    fs::remove_file(cut.join(FINAL_CHECKPOINT)).unwrap();
    assert_eq!(latest_checkpoint(&cut).unwrap().unwrap().0, 3);

    let outcome = train(&cfg, &s, &data, &cut).unwrap();
    assert_eq!(outcome.resumed_from, Some(3));
    assert_eq!(outcome.last_update, 8);
    for name in [TRAIN_LOG, EVAL_LOG, FINAL_CHECKPOINT, &checkpoint_name(6)] {
        assert_eq!(fs::read(whole.join(name)).unwrap(), fs::read(cut.join(name)).unwrap(), "{name}");
    }

    // A changed configuration cannot continue the old run.
    let mut other = s.clone();
    other.lr = 5e-4;
    let err = train(&cfg, &other, &data, &cut);
    assert!(matches!(err, Err(HarnessError::Config(_))), "{:?}", err.err());
}

#[test]
fn divergence_aborts_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    dataset(&data_dir, false);
    let data = TrainData::load(&data_dir, Regime::HsOnly).unwrap();
    let mut s = spec(Regime::HsOnly, 20);
    s.lr = 1e30;
    let err = train(&tiny_model(PeScheme::Sinusoidal), &s, &data, &tmp.path().join("run"));
    assert!(matches!(err, Err(HarnessError::Divergence { .. })), "{:?}", err.err());
}
