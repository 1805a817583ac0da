use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sudokuformer_numerics::{Scalar, Tape, Tensor, Var};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Weighted sum of `out` so that every output element gets a distinct
/// upstream gradient.
fn project<T: Scalar>(tape: &mut Tape<T>, out: Var) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let w = Tensor::from_fn(&shape, |i| T::from_f64(((i * 7919) % 13) as f64 / 6.0 - 1.0));
    let w = tape.constant(w);
    let p = tape.mul(out, w).unwrap();
    tape.sum(p).unwrap()
}

fn loss_of<T: Scalar>(
    inputs: &[Tensor<T>],
    build: &dyn Fn(&mut Tape<T>, &[Var]) -> Var,
) -> (Tape<T>, Vec<Var>, Var) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = build(&mut tape, &vars);
    let loss = project(&mut tape, out);
    (tape, vars, loss)
}

/// Largest per-tensor relative error `|a - n| / max(|a| + |n|, floor)` between
/// the analytic gradient and central differences.
fn max_rel_error<T: Scalar>(
    inputs: Vec<Tensor<T>>,
    h: f64,
    build: &dyn Fn(&mut Tape<T>, &[Var]) -> Var,
) -> f64 {
    let (mut tape, vars, loss) = loss_of(&inputs, build);
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .wrt(*v)
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let (mut diff2, mut norm_a, mut norm_n) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..inputs[i].numel() {
            let eval = |delta: f64| {
                let mut shifted = inputs.clone();
                let x = &mut shifted[i].data_mut()[j];
                *x = T::from_f64(x.as_f64() + delta);
                let (tape, _, loss) = loss_of(&shifted, build);
                tape.value(loss).item().as_f64()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.data()[j].as_f64();
            diff2 += (a - numeric).powi(2);
            norm_a += a * a;
            norm_n += numeric * numeric;
        }
        let rel = diff2.sqrt() / (norm_a.sqrt() + norm_n.sqrt()).max(1e-10);
        worst = worst.max(rel);
    }
    worst
}

fn check(name: &str, inputs: Vec<Tensor<f64>>, build: &dyn Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let err = max_rel_error(inputs, 1e-5, build);
    assert!(err <= 1e-6, "{name}: relative error {err:e}");
}

#[test]
fn every_primitive_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let r = &mut rng;
    check("matmul", vec![random(r, &[3, 4]), random(r, &[4, 2])], &|t, v| {
        t.matmul(v[0], v[1]).unwrap()
    });
    check(
        "batched_matmul",
        vec![random(r, &[2, 3, 4]), random(r, &[2, 4, 2])],
        &|t, v| t.batched_matmul(v[0], v[1]).unwrap(),
    );
    check("add", vec![random(r, &[2, 3]), random(r, &[2, 3])], &|t, v| {
        t.add(v[0], v[1]).unwrap()
    });
    check("mul", vec![random(r, &[2, 3]), random(r, &[2, 3])], &|t, v| {
        t.mul(v[0], v[1]).unwrap()
    });
    check("add_row", vec![random(r, &[3, 4]), random(r, &[4])], &|t, v| {
        t.add_row(v[0], v[1]).unwrap()
    });
    check("scale", vec![random(r, &[5])], &|t, v| t.scale(v[0], -1.7).unwrap());
    check("relu", vec![random(r, &[4, 3])], &|t, v| t.relu(v[0]).unwrap());
    check("gelu", vec![random(r, &[4, 3])], &|t, v| t.gelu(v[0]).unwrap());
    check(
        "layer_norm",
        vec![random(r, &[3, 5]), random(r, &[5]), random(r, &[5])],
        &|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
    );
    check("embedding", vec![random(r, &[5, 3])], &|t, v| {
        t.embedding(v[0], &[4, 0, 4, 2]).unwrap()
    });
    check("concat_cols", vec![random(r, &[3, 2]), random(r, &[3, 4])], &|t, v| {
        t.concat_cols(v[0], v[1]).unwrap()
    });
    check("concat_seq", vec![random(r, &[4, 3]), random(r, &[6, 3])], &|t, v| {
        t.concat_seq(v[0], v[1], 2).unwrap()
    });
    check("slice_seq", vec![random(r, &[10, 3])], &|t, v| {
        t.slice_seq(v[0], 2, 1, 3).unwrap()
    });
    let mask = Tensor::from_fn(&[2, 4], |i| if i % 3 == 1 { -1e9 } else { 0.0 });
    check("masked_softmax", vec![random(r, &[4, 4])], &move |t, v| {
        t.masked_softmax(v[0], Some(&mask)).unwrap()
    });
    check("dropout", vec![random(r, &[6])], &|t, v| {
        t.dropout(v[0], &[true, false, true, true, false, true], 0.25).unwrap()
    });
    check("cross_entropy", vec![random(r, &[4, 6])], &|t, v| {
        t.cross_entropy(v[0], &[1, 5, 0, 2], &[true, false, true, true])
            .unwrap()
    });
    // Two sequences of length 5, two heads of width 2, prefix-style mask.
    let bias = Tensor::from_fn(&[2, 5, 5], |i| {
        let (h, q, k) = (i / 25, (i / 5) % 5, i % 5);
        if k > q.max(1) {
            -1e9
        } else {
            -0.5 * h as f64 * (q as f64 - k as f64).abs()
        }
    });
    check(
        "attention",
        vec![random(r, &[10, 4]), random(r, &[10, 4]), random(r, &[10, 4])],
        &move |t, v| {
            let b = t.constant(bias.clone());
            t.attention(v[0], v[1], v[2], b, 2, 2).unwrap()
        },
    );
    check("attention_shared_input", vec![random(r, &[6, 4])], &|t, v| {
        let b = t.constant(Tensor::zeros(&[2, 3, 3]));
        t.attention(v[0], v[0], v[0], b, 2, 2).unwrap()
    });
}

#[test]
fn layer_norm_gradient_in_f32() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs: Vec<Tensor<f32>> = [&[4usize, 6][..], &[6], &[6]]
        .iter()
        .map(|s| random(&mut rng, s).cast())
        .collect();
    let err = max_rel_error(inputs, 1e-2, &|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap());
    assert!(err <= 1e-3, "relative error {err:e}");
}

#[test]
fn layer_norm_output_mean_is_bias_for_unit_gain() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = 4000;
    let d = 8;
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::from_fn(&[rows, d], |_| rng.gen_range(-5.0..5.0)));
    let g = tape.constant(Tensor::full(&[d], 1.0));
    let bias: Vec<f64> = (0..d).map(|j| j as f64 * 0.3 - 1.0).collect();
    let b = tape.constant(Tensor::from_f64(&[d], &bias).unwrap());
    let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
    let data = tape.value(y).data();
    for (j, &bj) in bias.iter().enumerate() {
        let mean: f64 = (0..rows).map(|r| data[r * d + j]).sum::<f64>() / rows as f64;
        assert!((mean - bj).abs() < 0.05, "dim {j}: {mean} vs {bj}");
    }
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

#[test]
fn backward_twice_accumulates_like_doubled_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random(&mut rng, &[3, 4]);
    let b = random(&mut rng, &[4, 2]);
    let run = |factor: f64| {
        let mut tape = Tape::<f64>::new();
        let pa = tape.param(0, a.clone());
        let pb = tape.param(1, b.clone());
        let c = tape.matmul(pa, pb).unwrap();
        let c = tape.gelu(c).unwrap();
        let s = tape.sum(c).unwrap();
        let s = tape.scale(s, factor).unwrap();
        tape.backward(s).unwrap()
    };
    let mut acc = vec![Tensor::zeros(&[3, 4]), Tensor::zeros(&[4, 2])];
    run(1.0).accumulate_into(&mut acc).unwrap();
    run(1.0).accumulate_into(&mut acc).unwrap();
    let doubled = run(2.0);
    for (slot, a) in acc.iter().enumerate() {
        let d = doubled.param(slot).unwrap();
        for (x, y) in a.data().iter().zip(d.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_and_backward_are_bit_identical_across_runs() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Tensor::<f32>::from_fn(&[64, 32], |_| rng.gen_range(-1.0..1.0));
        let w = Tensor::<f32>::from_fn(&[32, 32], |_| rng.gen_range(-0.2..0.2));
        let mut tape = Tape::new();
        let xv = tape.input(x);
        let wv = tape.param(0, w);
        let q = tape.matmul(xv, wv).unwrap();
        let b = tape.constant(Tensor::zeros(&[4, 16, 16]));
        let o = tape.attention(q, q, xv, b, 4, 4).unwrap();
        let s = tape.sum(o).unwrap();
        let out = tape.value(s).item().to_bits();
        let g = tape.backward(s).unwrap().param(0).unwrap();
        (out, g.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_agrees_with_naive_oracle(m in 1usize..9, k in 1usize..9, n in 1usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, &[m, k]);
        let b = random(&mut rng, &[k, n]);
        let mut tape = Tape::<f64>::new();
        let (av, bv) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let c = tape.matmul(av, bv).unwrap();
        let expected = naive_matmul(a.data(), b.data(), m, k, n);
        for (x, y) in tape.value(c).data().iter().zip(expected) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized(
        scores in proptest::collection::vec(-20.0f64..20.0, 1..12),
        c in -50.0f64..50.0,
        masked in proptest::collection::vec(any::<bool>(), 12),
    ) {
        let l = scores.len();
        let mut mask: Vec<f64> = masked[..l].iter().map(|&m| if m { -1e9 } else { 0.0 }).collect();
        mask[0] = 0.0;
        let mask = Tensor::from_f64(&[1, l], &mask).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_f64(&[1, l], &scores).unwrap());
        let y = tape.constant(Tensor::from_f64(&[1, l], &shifted).unwrap());
        let px = tape.masked_softmax(x, Some(&mask)).unwrap();
        let py = tape.masked_softmax(y, Some(&mask)).unwrap();
        let (a, b) = (tape.value(px).data(), tape.value(py).data());
        let total: f64 = a.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6);
        for ((p, q), m) in a.iter().zip(b).zip(mask.data()) {
            prop_assert!(*p >= 0.0);
            prop_assert!((p - q).abs() < 1e-9);
            if *m < 0.0 {
                prop_assert!(*p < 1e-300);
            }
        }
    }
}
