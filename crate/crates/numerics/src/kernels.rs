//! Row-wise kernels shared by the tape ops.

use crate::scalar::Scalar;

/// Additive mask values at or below this count as "disallowed".
pub const MASKED: f64 = -1e9;

/// In-place softmax over one row. Returns `false` if every entry is masked.
/// Non-finite scores propagate as NaN.
pub fn softmax_row<T: Scalar>(row: &mut [T]) -> bool {
    let threshold = T::from_f64(MASKED / 2.0);
    if row.iter().any(|v| v.is_nan()) {
        row.fill(T::nan());
        return true;
    }
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max <= threshold {
        return false;
    }
    let mut sum = T::zero();
    for v in row.iter_mut() {
        // exp of a masked score underflows to zero anyway.
        *v = if *v <= threshold { T::zero() } else { (*v - max).exp() };
        sum = sum + *v;
    }
    let inv = sum.recip();
    for v in row.iter_mut() {
        *v = *v * inv;
    }
    true
}

/// `dx = y * (dy - sum(dy * y))` for one softmax row, accumulated into `dx`.
pub fn softmax_row_backward<T: Scalar>(y: &[T], dy: &[T], dx: &mut [T]) {
    let dot: T = y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
    for ((d, &yi), &gi) in dx.iter_mut().zip(y).zip(dy) {
        *d = *d + yi * (gi - dot);
    }
}

/// Same as [`softmax_row_backward`] but overwrites `out`.
pub fn softmax_row_grad<T: Scalar>(y: &[T], dy: &[T], out: &mut [T]) {
    let dot: T = y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
    for ((d, &yi), &gi) in out.iter_mut().zip(y).zip(dy) {
        *d = yi * (gi - dot);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t)
        + half * x * (T::one() - t * t) * c * (T::one() + T::from_f64(3.0) * a * x * x)
}
