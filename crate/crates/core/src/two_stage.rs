//! Two-stage penalized estimation.
//!
//! First stage: each covariate column is regressed on the instruments with its
//! own Lasso penalty, giving `Γ̂` and the predicted covariates `D̂ = ZΓ̂`.
//! Second stage: the centered response is regressed on `D̂`. The solver has no
//! intercept, so every response and design entering a fit is centered here.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    center_columns, center_vector, ensure_finite_matrix, ensure_finite_vector, is_standardized, max_abs, standardize,
    variance, DenseMatrix, RealVector,
};
use crate::solver::{ScaledPenalty, 
    default_lambda_grid, kfold_cv_lambda, GramDesign, LassoProblem, LassoSettings, LassoSolution, solve_lasso,
};

/// Tolerance for the "instruments are standardized" precondition.
pub const STANDARDIZED_TOLERANCE: f64 = 1e-8;

/// Condition number above which a refit design counts as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct IvDataset {
    pub y: RealVector,
    pub x: DenseMatrix,
    pub z: DenseMatrix,
}

impl IvDataset {
    pub fn new(y: RealVector, x: DenseMatrix, z: DenseMatrix) -> Result<Self> {
        if x.nrows() != y.len() || z.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "Y has {} rows, X has {}, Z has {}",
                y.len(),
                x.nrows(),
                z.nrows()
            )));
        }
        ensure_finite_vector(&y, "Y")?;
        ensure_finite_matrix(&x, "X")?;
        ensure_finite_matrix(&z, "Z")?;
        Ok(IvDataset { y, x, z })
    }

    /// Replaces `Z` by its centered and scaled version.
    pub fn with_standardized_instruments(mut self) -> Result<Self> {
        self.z = standardize(&self.z)?.0;
        Ok(self)
    }

    pub fn nobs(&self) -> usize {
        self.y.len()
    }

    pub fn covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn instruments(&self) -> usize {
        self.z.ncols()
    }
}

/// Penalty grid used by cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub enum CvGrid {
    Explicit(Vec<f64>),
    /// `len` log-spaced values from each problem's `λ_max` down to `ratio·λ_max`.
    Relative { len: usize, ratio: f64 },
}

/// How a stage picks its Lasso penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    Scaled(ScaledPenalty),
    CrossValidation { folds: usize, grid: CvGrid, seed: u64 },
    /// One value for every column, or one per column.
    Fixed(Vec<f64>),
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::Scaled(ScaledPenalty::default())
    }
}

impl Tuning {
    fn fixed_for(&self, column: usize) -> Result<f64> {
        match self {
            Tuning::Fixed(values) if values.len() == 1 => Ok(values[0]),
            Tuning::Fixed(values) => values
                .get(column)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no fixed penalty for column {column}"))),
            _ => unreachable!("only called for fixed tuning"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstStageFit {
    /// `q × p` coefficient matrix.
    pub gamma_hat: DenseMatrix,
    /// `n × p` predicted covariates `ZΓ̂`.
    pub d_hat: DenseMatrix,
    pub lambdas: RealVector,
    /// Residual scale of each column fit (the scaled-Lasso σ̂ under that tuning).
    pub sigmas: RealVector,
    pub converged: bool,
}

impl FirstStageFit {
    /// Columns whose coefficient vector is identically zero.
    pub fn empty_columns(&self) -> Vec<usize> {
        (0..self.gamma_hat.ncols())
            .filter(|&j| self.gamma_hat.column(j).iter().all(|g| *g == 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStageFit {
    pub beta_hat: RealVector,
    pub lambda: f64,
    pub converged: bool,
}

struct ColumnFit {
    gamma: RealVector,
    lambda: f64,
    sigma: f64,
    converged: bool,
}

fn residual_rms(response: &RealVector, design: &DenseMatrix, solution: &LassoSolution) -> f64 {
    (response - design * &solution.coefficients).norm() / (response.len() as f64).sqrt()
}

fn cv_grid(grid: &CvGrid, response: &RealVector, design: &DenseMatrix) -> Result<Vec<f64>> {
    match grid {
        CvGrid::Explicit(values) => Ok(values.clone()),
        CvGrid::Relative { len, ratio } => {
            if *len == 0 || !(*ratio > 0.0 && *ratio < 1.0) {
                return Err(Error::InvalidArgument(format!("relative grid needs len ≥ 1 and 0 < ratio < 1, got {len}, {ratio}")));
            }
            Ok(default_lambda_grid(response, design, *len, *ratio))
        }
    }
}

fn fit_column(gd: &GramDesign<'_>, response: &RealVector, tuning: &Tuning, column: usize) -> Result<ColumnFit> {
    let settings = LassoSettings::default();
    match tuning {
        Tuning::Scaled(penalty) => {
            let fit = gd.scaled_lasso(response, *penalty, &settings)?;
            Ok(ColumnFit { gamma: fit.coefficients, lambda: fit.lambda, sigma: fit.sigma, converged: fit.converged })
        }
        Tuning::CrossValidation { folds, grid, seed } => {
            let grid = cv_grid(grid, response, gd.design())?;
            let cv = kfold_cv_lambda(response, gd.design(), *folds, &grid, *seed)?;
            let sol = gd.solve(&gd.moments(response)?, cv.best_lambda, &settings, None, None)?;
            let sigma = residual_rms(response, gd.design(), &sol);
            Ok(ColumnFit { gamma: sol.coefficients, lambda: cv.best_lambda, sigma, converged: sol.converged })
        }
        Tuning::Fixed(_) => {
            let lambda = tuning.fixed_for(column)?;
            if !(lambda >= 0.0) {
                return Err(Error::InvalidArgument(format!("penalty must be nonnegative, got {lambda}")));
            }
            let sol = gd.solve(&gd.moments(response)?, lambda, &settings, None, None)?;
            let sigma = residual_rms(response, gd.design(), &sol);
            Ok(ColumnFit { gamma: sol.coefficients, lambda, sigma, converged: sol.converged })
        }
    }
}

/// Regresses every covariate column on the instruments.
///
/// Columns are fit in parallel; the output does not depend on scheduling.
pub fn fit_first_stage(dataset: &IvDataset, tuning: &Tuning) -> Result<FirstStageFit> {
    if !is_standardized(&dataset.z, STANDARDIZED_TOLERANCE) {
        return Err(Error::InvalidArgument("instruments must be centered and standardized".into()));
    }
    let gd = GramDesign::new(&dataset.z)?;
    let p = dataset.covariates();
    let fits: Vec<ColumnFit> = (0..p)
        .into_par_iter()
        .map(|j| {
            let col = dataset.x.column(j);
            if variance(col.as_slice()) <= 0.0 {
                return Err(Error::ZeroVarianceColumn(j));
            }
            let (centered, _) = center_vector(&col.into_owned());
            fit_column(&gd, &centered, tuning, j)
                .map_err(|e| Error::FirstStageColumn { column: j, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;

    let q = dataset.instruments();
    let mut gamma_hat = DenseMatrix::zeros(q, p);
    let mut lambdas = RealVector::zeros(p);
    let mut sigmas = RealVector::zeros(p);
    let mut converged = true;
    for (j, fit) in fits.into_iter().enumerate() {
        gamma_hat.set_column(j, &fit.gamma);
        lambdas[j] = fit.lambda;
        sigmas[j] = fit.sigma;
        converged &= fit.converged;
    }
    let d_hat = &dataset.z * &gamma_hat;
    Ok(FirstStageFit { gamma_hat, d_hat, lambdas, sigmas, converged })
}

/// Lasso of the centered response on the centered predicted covariates.
pub fn fit_second_stage(y: &RealVector, d_hat: &DenseMatrix, tuning: &Tuning) -> Result<SecondStageFit> {
    if y.len() != d_hat.nrows() {
        return Err(Error::DimensionMismatch(format!("Y has {} rows, design has {}", y.len(), d_hat.nrows())));
    }
    ensure_finite_matrix(d_hat, "design")?;
    if max_abs(d_hat.as_slice()) == 0.0 {
        return Err(Error::AllZeroDesign);
    }
    let (yc, _) = center_vector(y);
    let (dc, _) = center_columns(d_hat);
    let settings = LassoSettings::default();
    match tuning {
        Tuning::Scaled(penalty) => {
            let gd = GramDesign::new(&dc)?;
            let fit = gd.scaled_lasso(&yc, *penalty, &settings)?;
            Ok(SecondStageFit { beta_hat: fit.coefficients, lambda: fit.lambda, converged: fit.converged })
        }
        Tuning::CrossValidation { folds, grid, seed } => {
            let grid = cv_grid(grid, &yc, &dc)?;
            let cv = kfold_cv_lambda(&yc, &dc, *folds, &grid, *seed)?;
            let sol = solve_lasso(&LassoProblem::new(&yc, &dc, cv.best_lambda)?, &settings, None)?;
            Ok(SecondStageFit { beta_hat: sol.coefficients, lambda: cv.best_lambda, converged: sol.converged })
        }
        Tuning::Fixed(_) => {
            let lambda = tuning.fixed_for(0)?;
            let sol = solve_lasso(&LassoProblem::new(&yc, &dc, lambda)?, &settings, None)?;
            Ok(SecondStageFit { beta_hat: sol.coefficients, lambda, converged: sol.converged })
        }
    }
}

/// Lasso of the response on the raw covariates, ignoring the instruments.
pub fn fit_naive(y: &RealVector, x: &DenseMatrix, tuning: &Tuning) -> Result<SecondStageFit> {
    fit_second_stage(y, x, tuning)
}

/// Ordinary least squares of the centered response on the centered selected
/// columns. Unselected coefficients are zero.
pub fn refit_ols(y: &RealVector, design: &DenseMatrix, selected: &[usize]) -> Result<RealVector> {
    let p = design.ncols();
    if y.len() != design.nrows() {
        return Err(Error::DimensionMismatch(format!("Y has {} rows, design has {}", y.len(), design.nrows())));
    }
    if let Some(&bad) = selected.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidArgument(format!("selected column {bad} outside {p} columns")));
    }
    let mut coefficients = RealVector::zeros(p);
    if selected.is_empty() {
        return Ok(coefficients);
    }
    if selected.len() >= y.len() {
        return Err(Error::SingularDesign { condition: f64::INFINITY });
    }
    let (yc, _) = center_vector(y);
    let (sub, _) = center_columns(&design.select_columns(selected.iter()));
    let gram = sub.tr_mul(&sub);
    let eig = gram.clone().symmetric_eigen();
    let largest = eig.eigenvalues.max();
    let smallest = eig.eigenvalues.min();
    let condition = if smallest > 0.0 { largest / smallest } else { f64::INFINITY };
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::SingularDesign { condition });
    }
    let rhs = sub.tr_mul(&yc);
    let solved = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::SingularDesign { condition })?;
    for (k, &j) in selected.iter().enumerate() {
        coefficients[j] = solved[k];
    }
    Ok(coefficients)
}

/// Fitted values `Ȳ + (X − X̄)β` of a centered refit.
pub fn fitted_values(y: &RealVector, design: &DenseMatrix, coefficients: &RealVector) -> RealVector {
    let (_, y_mean) = center_vector(y);
    let (centered, _) = center_columns(design);
    (centered * coefficients).add_scalar(y_mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, m: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_design_is_rejected() {
        let y = RealVector::from_fn(10, |i, _| i as f64);
        let d = DenseMatrix::zeros(10, 3);
        assert_eq!(fit_second_stage(&y, &d, &Tuning::default()).unwrap_err(), Error::AllZeroDesign);
    }

    #[test]
    fn lambda_max_gives_zero_second_stage() {
        let d = normals(40, 5, 1);
        let y = RealVector::from_fn(40, |i, _| (i as f64 * 0.37).sin());
        let (yc, _) = center_vector(&y);
        let (dc, _) = center_columns(&d);
        let lam = crate::solver::lambda_max(&yc, &dc);
        let fit = fit_second_stage(&y, &d, &Tuning::Fixed(vec![lam])).unwrap();
        assert!(fit.beta_hat.iter().all(|b| *b == 0.0));
        let naive = fit_naive(&y, &d, &Tuning::Fixed(vec![lam])).unwrap();
        assert_eq!(fit, naive);
    }

    #[test]
    fn refit_empty_and_single() {
        let x = normals(30, 4, 2);
        let y = RealVector::from_fn(30, |i, _| x[(i, 2)] * 1.7 + (i % 3) as f64);
        assert_eq!(refit_ols(&y, &x, &[]).unwrap(), RealVector::zeros(4));
        let b = refit_ols(&y, &x, &[2]).unwrap();
        let c = x.column(2).into_owned();
        let (cc, _) = center_vector(&c);
        let (yc, _) = center_vector(&y);
        let slope = (cc.dot(&yc) / 30.0) / variance(c.as_slice());
        assert!((b[2] - slope).abs() < 1e-12);
        assert_eq!(b[0], 0.0);
    }

    #[test]
    fn duplicate_selection_is_singular() {
        let x = normals(30, 4, 3);
        let y = RealVector::from_fn(30, |i, _| i as f64);
        assert!(matches!(refit_ols(&y, &x, &[1, 1]), Err(Error::SingularDesign { .. })));
        let mut dup = x.clone();
        dup.set_column(3, &x.column(0).into_owned());
        assert!(matches!(refit_ols(&y, &dup, &[0, 3]), Err(Error::SingularDesign { .. })));
    }

    #[test]
    fn refit_residual_is_orthogonal() {
        let x = normals(50, 6, 4);
        let y = RealVector::from_fn(50, |i, _| x[(i, 0)] - 0.5 * x[(i, 3)] + ((i * 7) % 5) as f64 * 0.1);
        let sel = [0, 3, 5];
        let b = refit_ols(&y, &x, &sel).unwrap();
        let resid = &y - fitted_values(&y, &x, &b);
        let (xc, _) = center_columns(&x.select_columns(sel.iter()));
        assert!(xc.tr_mul(&resid).amax() <= 1e-8);
    }

    #[test]
    fn first_stage_requires_standardized_instruments() {
        let z = normals(20, 3, 5) * 3.0;
        let x = normals(20, 2, 6);
        let ds = IvDataset::new(RealVector::zeros(20), x, z).unwrap();
        assert!(fit_first_stage(&ds, &Tuning::default()).is_err());
        let ds = ds.with_standardized_instruments().unwrap();
        assert!(fit_first_stage(&ds, &Tuning::default()).is_ok());
    }

    #[test]
    fn constant_covariate_is_reported() {
        let z = standardize(&normals(20, 3, 7)).unwrap().0;
        let mut x = normals(20, 3, 8);
        x.column_mut(1).fill(2.0);
        let ds = IvDataset::new(RealVector::zeros(20), x, z).unwrap();
        match fit_first_stage(&ds, &Tuning::default()) {
            Err(Error::FirstStageColumn { column: 1, source }) => assert_eq!(*source, Error::ZeroVarianceColumn(1)),
            Err(Error::ZeroVarianceColumn(1)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dataset_shape_checks() {
        let r = IvDataset::new(RealVector::zeros(5), DenseMatrix::zeros(4, 2), DenseMatrix::zeros(5, 2));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
