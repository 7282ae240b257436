//! Small dense-vector helpers shared by aggregation and privacy code.

use alloc::vec;
use alloc::vec::Vec;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// `sum_i w_i v_i / sum_i w_i`, accumulated in input order.
///
/// Callers validate that the list is nonempty, dimensions agree and weights
/// are positive.
pub fn weighted_mean<V: AsRef<[f64]>>(vectors: &[V], weights: &[f64]) -> Vec<f64> {
    let dim = vectors[0].as_ref().len();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (v, &w) in vectors.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(v.as_ref()) {
            *a += w * x;
        }
        total += w;
    }
    for a in &mut acc {
        *a /= total;
    }
    acc
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
