use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embed_io::EmbeddingMatrixPair;
use crate::error::{Error, Result};

/// Below this spread a cost matrix is treated as constant.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

/// Min-max scaled cosine-distance cost together with the raw similarities
/// it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    /// `(c - min c) / (max c - min c)` with `c = 1 - similarity`.
    pub values: Array2<f64>,
    pub similarity: Array2<f64>,
}

impl CostMatrix {
    pub fn from_similarity(similarity: Array2<f64>) -> Self {
        let raw = similarity.mapv(|s| 1.0 - s);
        Self {
            values: min_max_scale(&raw),
            similarity,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// Pairwise dot products of unit rows.
pub fn cosine_similarity(english: &Array2<f64>, foreign: &Array2<f64>) -> Result<Array2<f64>> {
    if english.ncols() != foreign.ncols() {
        return Err(Error::schema(
            None,
            format!(
                "embedding dimensions differ: {} vs {}",
                english.ncols(),
                foreign.ncols()
            ),
        ));
    }
    Ok(english.dot(&foreign.t()))
}

/// Scales the whole matrix to [0, 1]. A constant matrix maps to zeros.
pub fn min_max_scale(raw: &Array2<f64>) -> Array2<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let spread = hi - lo;
    if !(spread >= DEGENERATE_SPREAD) {
        return Array2::zeros(raw.dim());
    }
    raw.mapv(|x| ((x - lo) / spread).clamp(0.0, 1.0))
}

pub fn cost_matrix(pair: &EmbeddingMatrixPair) -> Result<CostMatrix> {
    if pair.english.nrows() == 0 || pair.foreign.nrows() == 0 {
        return Err(Error::schema(None, "cost matrix needs at least one sentence per side"));
    }
    Ok(CostMatrix::from_similarity(cosine_similarity(&pair.english, &pair.foreign)?))
}
