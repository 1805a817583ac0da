use sudokuformer_core::seqformat::{encode, tok, FormatOptions};
use sudokuformer_core::{fixtures, rotate_digits};
use sudokuformer_harness::probe::{heatmap_pgm, step_query_position, PPM_SCALE};
use sudokuformer_harness::{attention_map, probe_attention, write_probe, AttentionProbeResult};
use sudokuformer_model::{Model, ModelConfig, PeScheme};

fn model(pe: PeScheme) -> Model<f32> {
    Model::new(ModelConfig {
        pe_scheme: pe,
        seed: 5,
        ..ModelConfig::sized(32, 2, 4, 64)
    })
    .unwrap()
}

#[test]
fn probe_on_the_example_step() {
    let inst = fixtures::example_hidden_single();
    let m = model(PeScheme::Sinusoidal);
    let result = probe_attention(&m, &inst, 2, 0).unwrap();
    assert_eq!(result.step_cell, [2, 2]);
    let seq = encode(&inst, &FormatOptions::default()).unwrap();
    // The query sits on the column number of "row 2 column 2".
    assert_eq!(seq.ids[result.query_position - 1], tok::COLUMN);
    assert_eq!(seq.ids[result.query_position - 3], tok::ROW);
    assert_eq!(result.query_position, step_query_position(&inst, 2).unwrap());
    let digits: Vec<u8> = result.maps.iter().map(|m| m.digit).collect();
    assert_eq!(digits, vec![3, 4, 5, 6, 1, 2]);
    assert_eq!(result.maps.len(), 6);
    for map in &result.maps {
        assert_eq!(map.values.len(), 36);
        assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn shift_zero_is_direct_evaluation_and_reruns_agree() {
    let inst = fixtures::example_hidden_single();
    for pe in [PeScheme::Sinusoidal, PeScheme::Alibi, PeScheme::Srl, PeScheme::None] {
        let m = model(pe);
        let a = probe_attention(&m, &inst, 2, 9).unwrap();
        let b = probe_attention(&m, &inst, 2, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.maps[0].values, attention_map(&m, &inst, 2, 9).unwrap());
        let rotated = rotate_digits(&inst, 1).unwrap();
        assert_eq!(a.maps[1].values, attention_map(&m, &rotated, 2, 9).unwrap());
    }
}

#[test]
fn probe_rejects_bad_inputs() {
    let m = model(PeScheme::Sinusoidal);
    assert!(probe_attention(&m, &fixtures::example_full_house(), 2, 0).is_err());
    assert!(probe_attention(&m, &fixtures::example_naked_single(), 1, 0).is_err());
    let hs = fixtures::example_hidden_single();
    assert!(probe_attention(&m, &hs, 0, 0).is_err());
    assert!(probe_attention(&m, &hs, 6, 0).is_err());
}

#[test]
fn probe_files_round_trip() {
    let m = model(PeScheme::Sinusoidal);
    let result = probe_attention(&m, &fixtures::example_hidden_single(), 3, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_probe(&result, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("probe.json")).unwrap();
    let back: AttentionProbeResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back, result);
    let side = 6 * PPM_SCALE;
    for map in &result.maps {
        let bytes = std::fs::read(dir.path().join(format!("probe_shift{}.pgm", map.shift))).unwrap();
        assert_eq!(bytes, heatmap_pgm(&map.values));
        let header = format!("P5\n{side} {side}\n255\n");
        assert_eq!(bytes.len(), header.len() + side * side);
        assert_eq!(bytes.iter().skip(header.len()).max(), Some(&255));
    }
}
