//! Positional information and the attention layout over `[36 grid slots | text]`.

use rand::Rng;
use sudokuformer_core::grid::CELLS;
use sudokuformer_numerics::kernels::MASKED;
use sudokuformer_numerics::{Scalar, Tensor};

use crate::config::{ModelConfig, PeScheme};
use crate::error::ModelError;

pub const GRID_SLOTS: usize = CELLS;

/// Sinusoidal vector for text position `pos` (0 at `<SOS>`).
pub fn sinusoidal_pe(pos: usize, d_model: usize) -> Vec<f64> {
    let mut v = vec![0.0; d_model];
    for (j, x) in v.iter_mut().enumerate() {
        let pair = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
        *x = if j % 2 == 0 { angle.sin() } else { angle.cos() };
    }
    v
}

/// Geometric head slopes `2^(-8h/n)` for `h = 1..=n`; `2^-h` for eight heads.
pub fn alibi_slopes(n_heads: usize) -> Vec<f64> {
    (1..=n_heads)
        .map(|h| 2f64.powf(-8.0 * h as f64 / n_heads as f64))
        .collect()
}

/// Whether query slot `q` may attend key slot `k` in a sequence of 36 grid
/// slots followed by text.
pub fn allowed(q: usize, k: usize) -> bool {
    if k < GRID_SLOTS {
        true
    } else {
        q >= GRID_SLOTS && k <= q
    }
}

/// Additive `[S, S]` mask, `S = 36 + text_len`.
pub fn attention_mask(text_len: usize) -> Vec<f64> {
    let s = GRID_SLOTS + text_len;
    let mut m = vec![0.0; s * s];
    for q in 0..s {
        for k in 0..s {
            if !allowed(q, k) {
                m[q * s + k] = MASKED;
            }
        }
    }
    m
}

/// `-slope_h * |q - k|` on the concatenated index line, `[H, S, S]`.
pub fn alibi_bias(n_heads: usize, total_len: usize, grid_distance: bool) -> Vec<f64> {
    let slopes = alibi_slopes(n_heads);
    let s = total_len;
    let mut b = vec![0.0; n_heads * s * s];
    for (h, slope) in slopes.iter().enumerate() {
        for q in 0..s {
            for k in 0..s {
                if !grid_distance && (q < GRID_SLOTS || k < GRID_SLOTS) {
                    continue;
                }
                b[(h * s + q) * s + k] = -slope * (q as f64 - k as f64).abs();
            }
        }
    }
    b
}

/// Mask plus any scheme bias, as the constant `[H, S, S]` attention input.
pub fn attention_bias<T: Scalar>(config: &ModelConfig, text_len: usize) -> Tensor<T> {
    let s = GRID_SLOTS + text_len;
    let h = config.n_heads;
    let mask = attention_mask(text_len);
    let alibi =
        (config.pe_scheme == PeScheme::Alibi).then(|| alibi_bias(h, s, config.alibi_grid_distance));
    Tensor::from_fn(&[h, s, s], |i| {
        let m = mask[i % (s * s)];
        if m <= MASKED {
            T::from_f64(MASKED)
        } else {
            T::from_f64(alibi.as_ref().map_or(0.0, |a| a[i]))
        }
    })
}

/// `len` distinct labels from `0..n`, sorted ascending.
pub fn srl_labels<R: Rng>(rng: &mut R, len: usize, n: usize) -> Result<Vec<usize>, ModelError> {
    if n < len {
        return Err(ModelError::Input(format!(
            "cannot draw {len} distinct labels from {n}"
        )));
    }
    let mut labels = rand::seq::index::sample(rng, n, len).into_vec();
    labels.sort_unstable();
    Ok(labels)
}

/// One label per position up to `max_text_len`; a sequence of length `L`
/// uses the first `L`, so a sequence keeps its labels while it grows.
pub fn srl_draw<R: Rng>(rng: &mut R, config: &ModelConfig) -> Result<Vec<usize>, ModelError> {
    srl_labels(rng, config.max_text_len, config.srl_n())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sinusoid_examples() {
        let p0 = sinusoidal_pe(0, 8);
        assert_eq!(p0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        let p1 = sinusoidal_pe(1, 256);
        assert!((p1[0] - 0.841_470_984_807_896_5).abs() < 1e-12);
        assert!((p1[1] - 0.540_302_305_868_139_8).abs() < 1e-12);
    }

    #[test]
    fn slopes_for_eight_heads() {
        let s = alibi_slopes(8);
        assert_eq!(s[0], 0.5);
        assert_eq!(s[7], 1.0 / 256.0);
        for w in s.windows(2) {
            assert_eq!(w[1], w[0] / 2.0);
        }
    }

    #[test]
    fn mask_layout() {
        let l = 5;
        let s = GRID_SLOTS + l;
        let m = attention_mask(l);
        for q in 0..s {
            for k in 0..GRID_SLOTS {
                assert_eq!(m[q * s + k], 0.0);
            }
        }
        for q in 0..GRID_SLOTS {
            for k in GRID_SLOTS..s {
                assert_eq!(m[q * s + k], MASKED);
            }
        }
        for q in GRID_SLOTS..s {
            for k in GRID_SLOTS..s {
                assert_eq!(m[q * s + k] == 0.0, k <= q);
            }
        }
    }

    #[test]
    fn srl_forced_and_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(srl_labels(&mut rng, 6, 6).unwrap(), vec![0, 1, 2, 3, 4, 5]);
        assert!(srl_labels(&mut rng, 7, 6).is_err());
    }
}
