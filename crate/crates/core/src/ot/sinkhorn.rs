//! Entropic optimal transport by Sinkhorn iterations.
//!
//! The plan is `gamma = diag(u) K diag(v)` with `K = exp(-C / eps)`. The
//! scalings are carried as log-potentials `alpha = ln u`, `beta = ln v`,
//! updated with log-sum-exp so that small `eps` never overflows:
//!
//! ```text
//! alpha_i = ln p_i - LSE_j(beta_j - C_ij / eps)
//! beta_j  = ln q_j - LSE_i(alpha_i - C_ij / eps)
//! ```
//!
//! When the cost spread over `eps` is small enough for the kernel to stay in
//! range, the same iterations run on `u` and `v` directly, which avoids the
//! per-entry exponentials.
//!
//! After each `beta` update the column marginals are exact, so convergence
//! is measured on the row marginals.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornParams {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub gamma: Array2<f64>,
    pub row_marginal: Array1<f64>,
    pub col_marginal: Array1<f64>,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl TransportPlan {
    /// Largest absolute deviation of row and column sums from the marginals.
    pub fn marginal_violation(&self) -> f64 {
        let rows = self
            .gamma
            .rows()
            .into_iter()
            .zip(self.row_marginal.iter())
            .map(|(r, p)| (r.sum() - p).abs())
            .fold(0.0, f64::max);
        let cols = self
            .gamma
            .columns()
            .into_iter()
            .zip(self.col_marginal.iter())
            .map(|(c, q)| (c.sum() - q).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    }

    /// `<C, gamma>`.
    pub fn transport_cost(&self, cost: &Array2<f64>) -> f64 {
        (&self.gamma * cost).sum()
    }
}

pub fn uniform(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

/// Sinkhorn with uniform marginals `1/n` and `1/m`.
pub fn sinkhorn(cost: &Array2<f64>, params: &SinkhornParams) -> Result<TransportPlan> {
    let (n, m) = cost.dim();
    sinkhorn_with_marginals(cost, &uniform(n), &uniform(m), params)
}

pub fn sinkhorn_with_marginals(
    cost: &Array2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    params: &SinkhornParams,
) -> Result<TransportPlan> {
    let (n, m) = cost.dim();
    if n == 0 || m == 0 {
        return Err(Error::Parameter("cost matrix must be non-empty".into()));
    }
    if p.len() != n || q.len() != m {
        return Err(Error::Parameter(format!(
            "marginals of length {}/{} do not match cost {n}x{m}",
            p.len(),
            q.len()
        )));
    }
    if !(params.epsilon > 0.0 && params.epsilon.is_finite()) {
        return Err(Error::Parameter(format!("epsilon must be positive, got {}", params.epsilon)));
    }
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(Error::Parameter("tol must be positive and max_iter at least 1".into()));
    }
    if p.iter().chain(q.iter()).any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Parameter("marginals must be strictly positive".into()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numerical("cost matrix has non-finite entries".into()));
    }

    let (lo, hi) = cost
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    let solved = if (hi - lo) / params.epsilon <= SCALING_RANGE_LIMIT {
        scaling_iterations(cost, lo, p, q, params)
    } else {
        None
    };
    let (gamma, iterations, converged) = match solved {
        Some(s) => s,
        None => log_domain_iterations(cost, p, q, params)?,
    };
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("transport plan has non-finite entries".into()));
    }
    Ok(TransportPlan {
        gamma,
        row_marginal: p.clone(),
        col_marginal: q.clone(),
        epsilon: params.epsilon,
        iterations,
        converged,
    })
}

/// Largest cost spread over epsilon for which the kernel `exp(-c / eps)`
/// stays well inside the normal f64 range.
const SCALING_RANGE_LIMIT: f64 = 500.0;

type Solved = (Array2<f64>, usize, bool);

/// Plain scaling iterations on the shifted kernel. `None` when a scaling
/// leaves the finite positive range; the caller then falls back to the log
/// domain.
fn scaling_iterations(
    cost: &Array2<f64>,
    shift: f64,
    p: &Array1<f64>,
    q: &Array1<f64>,
    params: &SinkhornParams,
) -> Option<Solved> {
    let (n, m) = cost.dim();
    let inv_eps = 1.0 / params.epsilon;
    let k: Vec<f64> = cost.iter().map(|c| (-(c - shift) * inv_eps).exp()).collect();
    let mut k_t = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            k_t[j * n + i] = k[i * m + j];
        }
    }
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let mut kv = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let ok = |x: f64| x > 0.0 && x.is_finite();

    while iterations < params.max_iter {
        iterations += 1;
        for i in 0..n {
            kv[i] = dot(&k[i * m..(i + 1) * m], &v);
        }
        if iterations > 1 {
            let violation = (0..n).map(|i| (u[i] * kv[i] - p[i]).abs()).fold(0.0, f64::max);
            if !violation.is_finite() {
                return None;
            }
            if violation <= params.tol {
                converged = true;
                break;
            }
        }
        for i in 0..n {
            u[i] = p[i] / kv[i];
            if !ok(u[i]) {
                return None;
            }
        }
        for j in 0..m {
            v[j] = q[j] / dot(&k_t[j * n..(j + 1) * n], &u);
            if !ok(v[j]) {
                return None;
            }
        }
    }
    let gamma = Array2::from_shape_fn((n, m), |(i, j)| u[i] * k[i * m + j] * v[j]);
    Some((gamma, iterations, converged))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Iterations on the potentials `alpha = ln u`, `beta = ln v`, stable for
/// any epsilon.
fn log_domain_iterations(
    cost: &Array2<f64>,
    p: &Array1<f64>,
    q: &Array1<f64>,
    params: &SinkhornParams,
) -> Result<Solved> {
    let (n, m) = cost.dim();
    // Row-major kernels in both orientations keep the inner loops contiguous.
    let inv_eps = 1.0 / params.epsilon;
    let log_k: Vec<f64> = cost.iter().map(|c| -c * inv_eps).collect();
    let mut log_k_t = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            log_k_t[j * n + i] = log_k[i * m + j];
        }
    }
    let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let log_q: Vec<f64> = q.iter().map(|x| x.ln()).collect();

    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; m];
    let mut row_lse = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < params.max_iter {
        iterations += 1;
        for i in 0..n {
            row_lse[i] = logsumexp_shifted(&log_k[i * m..(i + 1) * m], &beta);
        }
        // Skipped on the first pass: the plan is not column-feasible yet.
        if iterations > 1 {
            let violation = (0..n)
                .map(|i| ((alpha[i] + row_lse[i]).exp() - p[i]).abs())
                .fold(0.0, f64::max);
            if !violation.is_finite() {
                return Err(Error::Numerical("Sinkhorn potentials diverged".into()));
            }
            if violation <= params.tol {
                converged = true;
                break;
            }
        }
        for i in 0..n {
            alpha[i] = log_p[i] - row_lse[i];
        }
        for j in 0..m {
            beta[j] = log_q[j] - logsumexp_shifted(&log_k_t[j * n..(j + 1) * n], &alpha);
        }
    }

    let gamma = Array2::from_shape_fn((n, m), |(i, j)| (alpha[i] + beta[j] + log_k[i * m + j]).exp());
    Ok((gamma, iterations, converged))
}

/// `ln sum_k exp(a_k + b_k)`.
#[inline]
fn logsumexp_shifted(a: &[f64], b: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        max = max.max(x + y);
    }
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x + y - max).exp()).sum();
    max + sum.ln()
}
