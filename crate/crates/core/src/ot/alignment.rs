use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of entries kept by a top-`frac` cut over `len` values. Never
/// below one.
pub fn top_count(len: usize, frac: f64) -> usize {
    // The small slack keeps e.g. 0.05 * 60 from rounding up to 4.
    ((frac * len as f64 - 1e-9).ceil() as usize).clamp(1, len.max(1))
}

/// Index of the row maximum; ties go to the smallest column.
fn row_argmax(gamma: &Array2<f64>, i: usize) -> usize {
    let mut best = 0;
    for j in 1..gamma.ncols() {
        if gamma[[i, j]] > gamma[[i, best]] {
            best = j;
        }
    }
    best
}

/// Marks `(i, j*)` where `j*` is row `i`'s argmax and `gamma[i, j*]` is
/// among the `ceil(top_frac * n)` largest values of column `j*` (ties at
/// the cutoff included).
pub fn directional_alignment(gamma: &Array2<f64>, top_frac: f64) -> Result<Array2<bool>> {
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::Parameter(format!("top_frac must be in (0, 1], got {top_frac}")));
    }
    let (n, m) = gamma.dim();
    let mut out = Array2::from_elem((n, m), false);
    if n == 0 || m == 0 {
        return Ok(out);
    }
    let k = top_count(n, top_frac);
    let mut cutoffs: Vec<Option<f64>> = vec![None; m];
    for i in 0..n {
        let j = row_argmax(gamma, i);
        let cutoff = *cutoffs[j].get_or_insert_with(|| {
            let mut col: Vec<f64> = gamma.column(j).to_vec();
            col.sort_by(|a, b| b.total_cmp(a));
            col[k - 1]
        });
        if gamma[[i, j]] >= cutoff {
            out[[i, j]] = true;
        }
    }
    Ok(out)
}

/// Final sentence-pair mask with the matrices it was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    /// n x m, `forward & backward^T & (xi >= xi_thres)`.
    pub mask: Array2<bool>,
    pub forward: Array2<bool>,
    pub backward: Array2<bool>,
    pub xi_thres: f64,
}

impl AlignmentMatrix {
    pub fn nnz(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.mask
            .indexed_iter()
            .filter(|(_, &b)| b)
            .map(|((i, j), _)| (i, j))
            .collect()
    }
}

pub fn intersect_alignments(
    forward: &Array2<bool>,
    backward: &Array2<bool>,
    xi: &Array2<f64>,
    xi_thres: f64,
) -> Result<AlignmentMatrix> {
    let (n, m) = forward.dim();
    if backward.dim() != (m, n) || xi.dim() != (n, m) {
        return Err(Error::schema(
            None,
            format!(
                "alignment shapes disagree: forward {:?}, backward {:?}, xi {:?}",
                forward.dim(),
                backward.dim(),
                xi.dim()
            ),
        ));
    }
    let mask = Array2::from_shape_fn((n, m), |(i, j)| {
        forward[[i, j]] && backward[[j, i]] && xi[[i, j]] >= xi_thres
    });
    Ok(AlignmentMatrix {
        mask,
        forward: forward.clone(),
        backward: backward.clone(),
        xi_thres,
    })
}
