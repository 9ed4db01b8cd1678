use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite_matrix, ensure_finite_vector, DenseMatrix, RealVector};

use super::lasso::{lambda_max, solve_lasso, LassoProblem, LassoSettings};

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_lambda: f64,
    /// Mean held-out squared error for each grid entry, in grid order.
    pub errors: RealVector,
}

/// Log-spaced grid from `λ_max` down to `ratio·λ_max`, descending.
pub fn default_lambda_grid(response: &RealVector, design: &DenseMatrix, len: usize, ratio: f64) -> Vec<f64> {
    let top = lambda_max(response, design).max(f64::MIN_POSITIVE);
    if len <= 1 {
        return vec![top];
    }
    let step = ratio.ln() / (len - 1) as f64;
    (0..len).map(|k| top * (step * k as f64).exp()).collect()
}

/// Chooses the penalty minimizing K-fold held-out squared error.
///
/// Rows are shuffled with a `ChaCha8` stream seeded by `seed`, then split into
/// `folds` contiguous blocks (earlier blocks absorb the remainder). Ties go to
/// the smallest penalty.
pub fn kfold_cv_lambda(response: &RealVector, design: &DenseMatrix, folds: usize, grid: &[f64], seed: u64) -> Result<CvResult> {
    let n = design.nrows();
    if response.len() != n {
        return Err(Error::DimensionMismatch(format!("response has {} entries, design has {n} rows", response.len())));
    }
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("fold count {folds} outside [2, {n}]")));
    }
    if grid.is_empty() || grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("penalty grid must be nonempty and strictly positive".into()));
    }
    ensure_finite_matrix(design, "design")?;
    ensure_finite_vector(response, "response")?;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    // visit the grid from large to small penalty so warm starts stay sparse
    let mut visit: Vec<usize> = (0..grid.len()).collect();
    visit.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]).then(a.cmp(&b)));

    let settings = LassoSettings::default();
    let mut sse = vec![0.0; grid.len()];
    let (base, extra) = (n / folds, n % folds);
    let mut start = 0;
    for k in 0..folds {
        let len = base + usize::from(k < extra);
        let held: &[usize] = &order[start..start + len];
        start += len;
        let mut is_held = vec![false; n];
        held.iter().for_each(|&i| is_held[i] = true);
        let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();

        let train_x = design.select_rows(train.iter());
        let train_y = response.select_rows(train.iter());
        let held_x = design.select_rows(held.iter());
        let held_y = response.select_rows(held.iter());

        let mut warm = vec![0.0; design.ncols()];
        // repeated grid values are adjacent in visit order and share one fit
        let mut last: Option<(f64, f64)> = None;
        for &g in &visit {
            let err = match last {
                Some((lambda, err)) if lambda == grid[g] => err,
                _ => {
                    let problem = LassoProblem::new(&train_y, &train_x, grid[g])?;
                    let fit = solve_lasso(&problem, &settings, Some(&warm))?;
                    warm.copy_from_slice(fit.coefficients.as_slice());
                    (&held_y - &held_x * &fit.coefficients).norm_squared()
                }
            };
            sse[g] += err;
            last = Some((grid[g], err));
        }
    }

    let errors = RealVector::from_iterator(grid.len(), sse.iter().map(|s| s / n as f64));
    let best = (0..grid.len())
        .min_by(|&a, &b| errors[a].total_cmp(&errors[b]).then(grid[a].total_cmp(&grid[b])))
        .expect("grid is nonempty");
    Ok(CvResult { best_lambda: grid[best], errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn data(n: usize, m: usize, seed: u64) -> (RealVector, DenseMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let mut beta = RealVector::zeros(m);
        beta[0] = 2.0;
        beta[2] = -1.0;
        let y = &x * beta + RealVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        (y, x)
    }

    #[test]
    fn singleton_grid() {
        let (y, x) = data(30, 4, 1);
        let r = kfold_cv_lambda(&y, &x, 5, &[0.3], 9).unwrap();
        assert_eq!(r.best_lambda, 0.3);
        assert_eq!(r.errors.len(), 1);
    }

    #[test]
    fn duplicate_grid_values_tie() {
        let (y, x) = data(30, 4, 2);
        let grid = [0.5, 0.05, 0.05, 0.5];
        let r = kfold_cv_lambda(&y, &x, 3, &grid, 4).unwrap();
        assert_eq!(r.errors[1], r.errors[2]);
        assert_eq!(r.errors[0], r.errors[3]);
        // all-equal grid exercises the smallest-λ rule directly
        let r = kfold_cv_lambda(&y, &x, 3, &[0.2, 0.2], 4).unwrap();
        assert_eq!(r.best_lambda, 0.2);
    }

    #[test]
    fn tie_goes_to_smallest_lambda() {
        // above λ_max every fit is zero, so every error is identical
        let (y, x) = data(30, 4, 3);
        let big = lambda_max(&y, &x) * 50.0;
        let r = kfold_cv_lambda(&y, &x, 5, &[big * 3.0, big, big * 2.0], 1).unwrap();
        assert_eq!(r.best_lambda, big);
    }

    #[test]
    fn chosen_lambda_beats_grid_endpoints() {
        // orthogonal design with a sparse truth
        let n = 60;
        let m = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw = DenseMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let q = raw.qr().q() * (n as f64).sqrt();
        let mut beta = RealVector::zeros(m);
        beta[1] = 1.5;
        beta[4] = -0.7;
        let y = &q * beta + RealVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let grid = default_lambda_grid(&y, &q, 25, 1e-3);
        let r = kfold_cv_lambda(&y, &q, 5, &grid, 11).unwrap();
        let best = grid.iter().position(|l| *l == r.best_lambda).unwrap();
        assert!(r.errors[best] <= r.errors[0]);
        assert!(r.errors[best] <= r.errors[grid.len() - 1]);
        assert!(r.best_lambda < grid[0] && r.best_lambda > grid[grid.len() - 1]);
    }

    #[test]
    fn fold_assignment_is_seeded() {
        let (y, x) = data(40, 5, 6);
        let grid = default_lambda_grid(&y, &x, 10, 0.01);
        let a = kfold_cv_lambda(&y, &x, 4, &grid, 123).unwrap();
        let b = kfold_cv_lambda(&y, &x, 4, &grid, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn malformed_inputs() {
        let (y, x) = data(10, 3, 7);
        assert!(kfold_cv_lambda(&y, &x, 1, &[0.1], 0).is_err());
        assert!(kfold_cv_lambda(&y, &x, 11, &[0.1], 0).is_err());
        assert!(kfold_cv_lambda(&y, &x, 2, &[], 0).is_err());
        assert!(kfold_cv_lambda(&y, &x, 2, &[0.0], 0).is_err());
    }
}
