//! Sentence alignment by entropic optimal transport.

mod alignment;
mod baseline;
mod cost;
mod oracle;
mod sinkhorn;

pub use alignment::{directional_alignment, intersect_alignments, top_count, AlignmentMatrix};
pub use baseline::{baseline_normalize, entmax15, global_top_fraction, softmax, BaselineMethod};
pub use cost::{cosine_similarity, cost_matrix, min_max_scale, CostMatrix};
pub use oracle::{exact_ot_oracle, ORACLE_MAX_CELLS};
pub use sinkhorn::{sinkhorn, sinkhorn_with_marginals, uniform, SinkhornParams, TransportPlan};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::embed_io::EmbeddingMatrixPair;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignParams {
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub top_frac: f64,
    pub xi_thres: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        let s = SinkhornParams::default();
        Self {
            epsilon: s.epsilon,
            tol: s.tol,
            max_iter: s.max_iter,
            top_frac: 0.05,
            xi_thres: 0.6,
        }
    }
}

impl AlignParams {
    pub fn sinkhorn(&self) -> SinkhornParams {
        SinkhornParams {
            epsilon: self.epsilon,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

/// Everything computed while aligning one stock-day.
#[derive(Debug, Clone)]
pub struct StockDayAlignment {
    pub cost: CostMatrix,
    /// English rows to foreign columns.
    pub forward_plan: TransportPlan,
    /// Foreign rows to English columns.
    pub backward_plan: TransportPlan,
    pub alignment: AlignmentMatrix,
}

impl StockDayAlignment {
    pub fn converged(&self) -> bool {
        self.forward_plan.converged && self.backward_plan.converged
    }
}

/// Runs both transport directions and intersects their alignments with the
/// similarity gate.
pub fn align_pair(pair: &EmbeddingMatrixPair, params: &AlignParams) -> Result<StockDayAlignment> {
    let cost = cost_matrix(pair)?;
    let sk = params.sinkhorn();
    let forward_plan = sinkhorn(&cost.values, &sk)?;
    let transposed = cost.values.t().to_owned();
    let backward_plan = sinkhorn(&transposed, &sk)?;
    let forward = directional_alignment(&forward_plan.gamma, params.top_frac)?;
    let backward = directional_alignment(&backward_plan.gamma, params.top_frac)?;
    let alignment = intersect_alignments(&forward, &backward, &cost.similarity, params.xi_thres)?;
    Ok(StockDayAlignment {
        cost,
        forward_plan,
        backward_plan,
        alignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub i: usize,
    pub j: usize,
    pub xi: f64,
    pub gamma: f64,
}

/// Per-stock-day alignment output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub ticker: String,
    pub trading_day: NaiveDate,
    pub n: usize,
    pub m: usize,
    pub pairs: Vec<AlignedPair>,
    pub converged: bool,
    pub iterations: [usize; 2],
    pub params: AlignParams,
}

impl AlignmentRecord {
    pub fn from_alignment(pair: &EmbeddingMatrixPair, a: &StockDayAlignment, params: &AlignParams) -> Self {
        let pairs = a
            .alignment
            .pairs()
            .into_iter()
            .map(|(i, j)| AlignedPair {
                i,
                j,
                xi: a.cost.similarity[[i, j]],
                gamma: a.forward_plan.gamma[[i, j]],
            })
            .collect();
        Self {
            ticker: pair.ticker.clone(),
            trading_day: pair.trading_day,
            n: pair.english.nrows(),
            m: pair.foreign.nrows(),
            pairs,
            converged: a.converged(),
            iterations: [a.forward_plan.iterations, a.backward_plan.iterations],
            params: *params,
        }
    }

    /// Dense n x m mask rebuilt from the pair list.
    pub fn mask(&self) -> Result<ndarray::Array2<bool>> {
        let mut mask = ndarray::Array2::from_elem((self.n, self.m), false);
        for p in &self.pairs {
            if p.i >= self.n || p.j >= self.m {
                return Err(Error::schema(
                    None,
                    format!("pair ({}, {}) outside {}x{}", p.i, p.j, self.n, self.m),
                ));
            }
            mask[[p.i, p.j]] = true;
        }
        Ok(mask)
    }
}
