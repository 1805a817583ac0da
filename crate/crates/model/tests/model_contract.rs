use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sudokuformer_core::fixtures;
use sudokuformer_core::seqformat::{self, tok, FormatOptions, TokenId};
use sudokuformer_core::PuzzleInstance;
use sudokuformer_model::checkpoint;
use sudokuformer_model::{
    generate_greedy, srl_draw, Batch, GenRequest, Mode, Model, ModelConfig, PeScheme, GRID_SLOTS,
};
use sudokuformer_numerics::{Tape, Tensor};

fn small(pe: PeScheme) -> ModelConfig {
    ModelConfig {
        pe_scheme: pe,
        max_text_len: 48,
        seed: 7,
        ..ModelConfig::sized(16, 2, 4, 32)
    }
}

fn batch_for(model: &Model<f64>, insts: &[PuzzleInstance], seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texts: Vec<Vec<TokenId>> = insts
        .iter()
        .map(|i| seqformat::encode(i, &FormatOptions::default()).unwrap().ids)
        .collect();
    Batch {
        grids: insts.iter().map(|i| *i.grid.values()).collect(),
        srl: (model.config().pe_scheme == PeScheme::Srl).then(|| {
            insts
                .iter()
                .map(|_| srl_draw(&mut rng, model.config()).unwrap())
                .collect()
        }),
        texts,
        cell_order: None,
    }
}

fn logits(model: &Model<f64>, batch: &Batch) -> Tensor<f64> {
    let mut tape = Tape::new();
    let out = model.forward(&mut tape, batch, Mode::Eval).unwrap();
    tape.value(out.logits).clone()
}

const ALL_SCHEMES: [PeScheme; 4] = [PeScheme::Sinusoidal, PeScheme::Alibi, PeScheme::Srl, PeScheme::None];

#[test]
fn default_parameter_count_is_frozen() {
    // Embeddings 6*128*2 + 7*256 + 22*256 = 8960; per layer 4*(256*256+256)
    // + 2*512 + 256*1024 + 1024 + 1024*256 + 256 = 789760; decoder 256*22+22.
    assert_eq!(ModelConfig::default().param_count(), 2_383_894);
    let srl = ModelConfig {
        pe_scheme: PeScheme::Srl,
        ..ModelConfig::default()
    };
    assert_eq!(srl.param_count(), 2_383_894 + 320 * 256);
    let m = Model::<f32>::new(ModelConfig::default()).unwrap();
    assert_eq!(m.param_count(), 2_383_894);
}

#[test]
fn config_validation() {
    let bad = ModelConfig {
        n_heads: 6,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = ModelConfig {
        coord_emb_dim: 100,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
    let json = r#"{"d_model": 256, "bogus": 1}"#;
    assert!(serde_json::from_str::<ModelConfig>(json).is_err());
}

#[test]
fn grid_embedding_structure() {
    let model = Model::<f64>::new(small(PeScheme::Sinusoidal)).unwrap();
    let grid = *fixtures::example_hidden_single().grid.values();
    let e = model.embed_grid(&grid).unwrap();
    assert_eq!(e.shape(), &[36, 16]);
    let row = |i: usize| &e.data()[i * 16..(i + 1) * 16];
    // Cells (1,1) and (1,5) are both empty and share row 1: the row half of
    // the coordinate vector matches, so only the column half may differ.
    let digit = model.params()[model.slot("embed.digit").unwrap()].data()[..16].to_vec();
    let (a, b) = (row(0), row(4));
    for j in 0..8 {
        assert_eq!(a[j] - digit[j], b[j] - digit[j]);
    }
    let mut changed = grid;
    changed[0] = 5;
    let e2 = model.embed_grid(&changed).unwrap();
    for i in 0..36 {
        let same = e.data()[i * 16..(i + 1) * 16] == e2.data()[i * 16..(i + 1) * 16];
        assert_eq!(same, i != 0, "cell {i}");
    }
}

#[test]
fn logits_shape_and_attention_rows() {
    for pe in ALL_SCHEMES {
        let model = Model::<f64>::new(small(pe)).unwrap();
        let insts = [fixtures::example_hidden_single(), fixtures::example_full_house()];
        let batch = batch_for(&model, &insts, 1);
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, &batch, Mode::Eval).unwrap();
        let l = batch.text_len();
        assert_eq!(tape.value(out.logits).shape(), &[2 * l, 22]);
        assert_eq!(out.attention.len(), 2);
        let s = GRID_SLOTS + l;
        for &a in &out.attention {
            let (probs, b, h) = tape.attention_probs(a).unwrap();
            assert_eq!((b, h), (2, 4));
            for row in probs.chunks(s) {
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn scheme_exclusivity() {
    let insts = [fixtures::example_hidden_single()];
    for pe in ALL_SCHEMES {
        let model = Model::<f64>::new(small(pe)).unwrap();
        let batch = batch_for(&model, &insts, 2);
        let emb = model.embed_text(&batch).unwrap();
        let table = &model.params()[model.slot("embed.text").unwrap()];
        let raw: Vec<f64> = batch.texts[0]
            .iter()
            .flat_map(|&t| table.data()[t as usize * 16..(t as usize + 1) * 16].to_vec())
            .collect();
        let unchanged = emb.data() == raw.as_slice();
        assert_eq!(unchanged, matches!(pe, PeScheme::Alibi | PeScheme::None), "{pe:?}");

        let bias = sudokuformer_model::positional::attention_bias::<f64>(model.config(), 5);
        let mask = sudokuformer_model::attention_mask(5);
        let s = GRID_SLOTS + 5;
        let only_mask = bias
            .data()
            .iter()
            .enumerate()
            .all(|(i, &v)| v == mask[i % (s * s)]);
        assert_eq!(only_mask, pe != PeScheme::Alibi, "{pe:?}");
    }
}

#[test]
fn alibi_bias_matches_closed_form_on_allowed_pairs() {
    let model = Model::<f64>::new(small(PeScheme::Alibi)).unwrap();
    let l = 4;
    let s = GRID_SLOTS + l;
    let bias = sudokuformer_model::positional::attention_bias::<f64>(model.config(), l);
    let slopes = sudokuformer_model::alibi_slopes(4);
    for h in 0..4 {
        for q in 0..s {
            for k in 0..s {
                let v = bias.data()[(h * s + q) * s + k];
                if sudokuformer_model::positional::allowed(q, k) {
                    assert_eq!(v, -slopes[h] * (q as f64 - k as f64).abs());
                } else {
                    assert!(v <= -1e9);
                }
            }
        }
    }
}

#[test]
fn grid_order_does_not_matter() {
    for pe in [PeScheme::Sinusoidal, PeScheme::Srl, PeScheme::None] {
        let model = Model::<f64>::new(small(pe)).unwrap();
        let insts = [fixtures::example_hidden_single(), fixtures::example_naked_single()];
        let mut batch = batch_for(&model, &insts[..1], 3);
        let base = logits(&model, &batch);
        let mut perm: Vec<usize> = (0..36).collect();
        perm.reverse();
        perm.swap(3, 17);
        batch.cell_order = Some(perm);
        let permuted = logits(&model, &batch);
        for (a, b) in base.data().iter().zip(permuted.data()) {
            assert!((a - b).abs() < 1e-9, "{pe:?}: {a} vs {b}");
        }
    }
}

#[test]
fn srl_relabeling_keeps_structure() {
    let model = Model::<f64>::new(small(PeScheme::Srl)).unwrap();
    let insts = [fixtures::example_hidden_single()];
    let a = batch_for(&model, &insts, 10);
    let b = batch_for(&model, &insts, 11);
    assert_ne!(a.srl, b.srl);
    let (la, lb) = (logits(&model, &a), logits(&model, &b));
    assert_eq!(la.shape(), lb.shape());
    assert_ne!(la.data(), lb.data());
    assert!(la.is_finite() && lb.is_finite());
}

#[test]
fn invalid_inputs_are_rejected() {
    let model = Model::<f64>::new(small(PeScheme::Srl)).unwrap();
    let insts = [fixtures::example_hidden_single()];
    let mut batch = batch_for(&model, &insts, 4);
    let mut tape = Tape::new();
    batch.texts[0][3] = 99;
    assert!(model.forward(&mut tape, &batch, Mode::Eval).is_err());
    let mut batch = batch_for(&model, &insts, 4);
    batch.texts[0] = vec![tok::SOS; 49];
    assert!(model.forward(&mut tape, &batch, Mode::Eval).is_err());
    let mut batch = batch_for(&model, &insts, 4);
    batch.srl = None;
    assert!(model.forward(&mut tape, &batch, Mode::Eval).is_err());
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.sdok");
    let model = Model::<f32>::new(small(PeScheme::Alibi)).unwrap();
    let extra = vec![("opt.step".to_string(), Tensor::scalar(3.0f32))];
    checkpoint::save(&model, &path, &extra).unwrap();
    let (back, extra_back) = checkpoint::load(&path).unwrap();
    assert_eq!(back.params(), model.params());
    assert_eq!(back.config(), model.config());
    assert_eq!(extra_back, extra);

    let mut sidecar = checkpoint::read_sidecar(&path).unwrap();
    sidecar.vocab_hash = "0".repeat(64);
    std::fs::write(
        checkpoint::sidecar_path(&path),
        serde_json::to_string(&sidecar).unwrap(),
    )
    .unwrap();
    assert!(checkpoint::load(&path).is_err());

    let mut sidecar = checkpoint::read_sidecar(&path).unwrap();
    sidecar.vocab_hash = seqformat::vocab_hash();
    sidecar.config.d_ff = 64;
    std::fs::write(
        checkpoint::sidecar_path(&path),
        serde_json::to_string(&sidecar).unwrap(),
    )
    .unwrap();
    assert!(checkpoint::load(&path).is_err());
}

#[test]
fn greedy_generation_contracts() {
    let model = Model::<f64>::new(small(PeScheme::Sinusoidal)).unwrap();
    let ns = fixtures::example_naked_single_five();
    let hs = fixtures::example_hidden_single();
    let request = |inst: &PuzzleInstance, ns_queries| GenRequest {
        grid: *inst.grid.values(),
        prompt: seqformat::encode_prompt(inst, false).unwrap().ids,
        ns_queries,
        srl: None,
    };
    let reqs = vec![
        request(&hs, None),
        request(&ns, Some(ns.queries.clone())),
        request(&hs, None),
    ];
    let a = generate_greedy(&model, &reqs, 2).unwrap();
    let b = generate_greedy(&model, &reqs, 8).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0], a[2]);
    let ns_out = &a[1].tokens;
    assert_eq!(ns_out.len(), 5 * 5 + 1);
    assert_eq!(*ns_out.last().unwrap(), tok::EOS);
    for (q, cell) in ns.queries.iter().enumerate() {
        assert_eq!(ns_out[q * 5 + 1], seqformat::number(cell.row()));
        assert_eq!(ns_out[q * 5 + 3], seqformat::number(cell.col()));
    }
    // An untrained model rarely emits <EOS>; it must stop at the cap.
    let hs_out = &a[0];
    assert!(hs_out.tokens.last() == Some(&tok::EOS) || hs_out.overflow);
    assert!(hs_out.tokens.len() <= sudokuformer_model::GENERATION_CAP);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn later_text_never_changes_earlier_logits(
        pos in 1usize..39,
        replacement in 0u32..22,
        pe_index in 0usize..4,
    ) {
        let model = Model::<f64>::new(small(ALL_SCHEMES[pe_index])).unwrap();
        let insts = [fixtures::example_hidden_single()];
        let batch = batch_for(&model, &insts, 5);
        let base = logits(&model, &batch);
        let mut edited = batch.clone();
        edited.texts[0][pos] = replacement;
        let after = logits(&model, &edited);
        let v = 22;
        prop_assert_eq!(&base.data()[..pos * v], &after.data()[..pos * v]);
    }
}
