//! Dense similarity normalizations used as sparsity baselines.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ot::alignment::top_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Softmax,
    Entmax15,
}

/// Row-wise softmax or 1.5-entmax of `xi / temperature`.
pub fn baseline_normalize(xi: &Array2<f64>, method: BaselineMethod, temperature: f64) -> Result<Array2<f64>> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {temperature}")));
    }
    if xi.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("similarity matrix has non-finite entries".into()));
    }
    let mut out = Array2::<f64>::zeros(xi.dim());
    for (i, row) in xi.rows().into_iter().enumerate() {
        let z: Vec<f64> = row.iter().map(|x| x / temperature).collect();
        let p = match method {
            BaselineMethod::Softmax => softmax(&z),
            BaselineMethod::Entmax15 => entmax15(&z),
        };
        for (j, v) in p.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Exact 1.5-entmax by the sort-based threshold.
///
/// Output is `max(z/2 - tau, 0)^2` with `tau` chosen so the result sums to
/// one. For the first `k` sorted entries the candidate threshold solves
/// `sum_{r<=k} (x_r - tau)^2 = 1`, i.e.
/// `tau_k = mean_k - sqrt((1 - k * (meansq_k - mean_k^2)) / k)`, and the
/// support is the largest `k` with `tau_k <= x_(k)`.
pub fn entmax15(z: &[f64]) -> Vec<f64> {
    if z.is_empty() {
        return Vec::new();
    }
    let x: Vec<f64> = z.iter().map(|v| v / 2.0).collect();
    let mut sorted = x.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut tau = sorted[0] - 1.0;
    for (idx, &v) in sorted.iter().enumerate() {
        let k = (idx + 1) as f64;
        sum += v;
        sum_sq += v * v;
        let mean = sum / k;
        let mean_sq = sum_sq / k;
        let delta = ((1.0 - k * (mean_sq - mean * mean)) / k).max(0.0);
        let candidate = mean - delta.sqrt();
        if candidate <= v {
            tau = candidate;
        } else {
            break;
        }
    }
    let mut p: Vec<f64> = x.iter().map(|v| (v - tau).max(0.0).powi(2)).collect();
    // Renormalize away rounding drift.
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Selects every entry at or above the `ceil(frac * n * m)`-th largest value
/// of the whole matrix.
pub fn global_top_fraction(matrix: &Array2<f64>, frac: f64) -> Array2<bool> {
    if matrix.is_empty() {
        return Array2::from_elem(matrix.dim(), false);
    }
    let k = top_count(matrix.len(), frac);
    let mut all: Vec<f64> = matrix.iter().copied().collect();
    all.sort_by(|a, b| b.total_cmp(a));
    let cutoff = all[k - 1];
    matrix.mapv(|v| v >= cutoff)
}
