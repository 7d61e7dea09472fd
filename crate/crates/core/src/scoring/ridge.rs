use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ridge weights solving `(X^T X + lambda I) w = X^T y`, no intercept.
pub fn fit_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientData("ridge needs at least one row".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Parameter(format!(
            "design has {} rows but target has {}",
            x.nrows(),
            y.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be non-negative, got {lambda}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge inputs contain non-finite values".into()));
    }
    let gram = x.tr_mul(x);
    let xty = x.tr_mul(y);
    solve_normal_equations(&gram, &xty, lambda)
}

/// Cholesky solve of `(gram + lambda I) w = xty`.
pub fn solve_normal_equations(gram: &DMatrix<f64>, xty: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let d = gram.nrows();
    let mut a = gram.clone();
    for k in 0..d {
        a[(k, k)] += lambda;
    }
    let chol = a.cholesky().ok_or(Error::SingularSystem)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // Squared pivot ratio is the usual reciprocal-condition proxy.
    if d > 0 && !((lo / hi).powi(2) > 1e-14) {
        return Err(Error::SingularSystem);
    }
    Ok(chol.solve(xty))
}

/// Held-out error of every grid value and the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub mse: Vec<f64>,
}

/// Contiguous fold boundaries: the first `n % folds` folds get one extra row.
pub fn fold_ranges(n: usize, folds: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / folds;
    let extra = n % folds;
    let mut start = 0;
    (0..folds)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// K-fold cross-validation over time-ordered contiguous folds. The lambda
/// with the smallest mean out-of-fold squared error wins; exact ties go to
/// the larger lambda.
pub fn cross_validate_lambda(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    folds: usize,
) -> Result<CvResult> {
    let n = x.nrows();
    if folds < 2 {
        return Err(Error::Parameter("cross-validation needs at least two folds".into()));
    }
    if n < folds {
        return Err(Error::InsufficientData(format!("{n} rows for {folds} folds")));
    }
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Parameter("lambda grid must be non-empty and positive".into()));
    }
    let mut sorted_grid = grid.to_vec();
    sorted_grid.sort_by(f64::total_cmp);
    sorted_grid.dedup();

    let ranges = fold_ranges(n, folds);
    let parts: Vec<(DMatrix<f64>, DVector<f64>)> = ranges
        .iter()
        .map(|r| {
            let xs = x.rows(r.start, r.len());
            let ys = y.rows(r.start, r.len());
            (xs.tr_mul(&xs), xs.tr_mul(&ys))
        })
        .collect();

    let d = x.ncols();
    let mut sse = vec![0.0; sorted_grid.len()];
    for (f, r) in ranges.iter().enumerate() {
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut xty = DVector::<f64>::zeros(d);
        for (g, (pg, px)) in parts.iter().enumerate() {
            if g != f {
                gram += pg;
                xty += px;
            }
        }
        let xs = x.rows(r.start, r.len());
        let ys = y.rows(r.start, r.len());
        for (k, &lambda) in sorted_grid.iter().enumerate() {
            let w = solve_normal_equations(&gram, &xty, lambda)?;
            let resid = &ys - &xs * &w;
            sse[k] += resid.norm_squared();
        }
    }
    let mse: Vec<f64> = sse.iter().map(|s| s / n as f64).collect();
    let mut best = 0;
    for k in 1..mse.len() {
        if mse[k] <= mse[best] {
            best = k;
        }
    }
    Ok(CvResult {
        lambda: sorted_grid[best],
        grid: sorted_grid,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn identity_design_without_penalty_returns_target() {
        let y = DVector::from_vec(vec![0.3, -1.2, 4.0]);
        let w = fit_ridge(&DMatrix::identity(3, 3), &y, 0.0).unwrap();
        assert!((w - &y).amax() < 1e-15);
    }

    #[test]
    fn identity_design_with_unit_penalty_halves() {
        let y = DVector::from_element(4, 1.0);
        let w = fit_ridge(&DMatrix::identity(4, 4), &y, 1.0).unwrap();
        assert!((w - DVector::from_element(4, 0.5)).amax() < 1e-15);
    }

    #[test]
    fn huge_penalty_shrinks_to_zero() {
        let (x, y) = random_problem(3, 40, 5);
        let lambda = 1e9;
        let w = fit_ridge(&x, &y, lambda).unwrap();
        assert!(w.norm() <= x.tr_mul(&y).norm() / lambda * (1.0 + 1e-9));
        assert!(w.norm() < 1e-6);
    }

    #[test]
    fn rank_deficient_without_penalty_is_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(fit_ridge(&x, &y, 0.0), Err(Error::SingularSystem)));
        assert!(fit_ridge(&x, &y, 10.0).is_ok());
    }

    #[test]
    fn normal_equation_residual_is_tiny() {
        let (x, y) = random_problem(11, 200, 16);
        let lambda = 30.0;
        let w = fit_ridge(&x, &y, lambda).unwrap();
        let xty = x.tr_mul(&y);
        let lhs = x.tr_mul(&x) * &w + &w * lambda;
        assert!((lhs - &xty).amax() <= 1e-8 * (1.0 + xty.amax()));
    }

    #[test]
    fn fold_ranges_cover_rows() {
        let r = fold_ranges(12, 5);
        assert_eq!(r, vec![0..3, 3..6, 6..8, 8..10, 10..12]);
    }

    #[test]
    fn too_few_rows_for_folds() {
        let (x, y) = random_problem(1, 4, 2);
        assert!(matches!(
            cross_validate_lambda(&x, &y, &[10.0], 5),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn planted_signal_prefers_smallest_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, d) = (2000, 8);
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w_star = DVector::from_fn(d, |i, _| 1.0 + i as f64);
        let y = &x * &w_star + DVector::from_fn(n, |_, _| 1e-3 * rng.sample::<f64, _>(StandardNormal));
        let grid: Vec<f64> = (1..=10).map(|k| 10.0 * k as f64).collect();
        let cv = cross_validate_lambda(&x, &y, &grid, 5).unwrap();
        assert_eq!(cv.lambda, 10.0);
    }

    #[test]
    fn noise_prefers_heaviest_shrinkage() {
        // Monte Carlo over 50 seeds: on pure-noise targets the largest
        // lambda should win most often.
        let grid: Vec<f64> = (1..=10).map(|k| 10.0 * k as f64).collect();
        let mut wins = 0;
        for seed in 0..50 {
            let (x, y) = random_problem(1000 + seed, 500, 10);
            let x = x / 10f64.sqrt();
            let cv = cross_validate_lambda(&x, &y, &grid, 5).unwrap();
            if cv.lambda == 100.0 {
                wins += 1;
            }
        }
        assert!(wins > 25, "lambda=100 won {wins}/50");
    }

    #[test]
    fn cv_is_deterministic() {
        let (x, y) = random_problem(9, 300, 6);
        let grid = [10.0, 20.0, 50.0];
        assert_eq!(
            cross_validate_lambda(&x, &y, &grid, 5).unwrap(),
            cross_validate_lambda(&x, &y, &grid, 5).unwrap()
        );
    }
}
