use crate::error::{Error, Result};
use crate::linalg::{center_columns, center_vector, DenseMatrix, RealVector};
use crate::solver::{GramDesign, LassoSettings};

/// Residual variances at or below this are treated as degenerate.
pub(crate) const DEGENERATE_VARIANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct InverseRegressionFit {
    pub coordinate: usize,
    /// Entry 0 multiplies the response; entries `1..p` multiply the other
    /// predicted covariates in their original order with `coordinate` skipped.
    pub theta_hat: RealVector,
    pub mu: f64,
    pub converged: bool,
}

impl InverseRegressionFit {
    pub fn response_coefficient(&self) -> f64 {
        self.theta_hat[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub xi: RealVector,
    pub zeta: RealVector,
    pub sigma2_xi: f64,
    pub sigma2_zeta: f64,
}

/// The centered composite design `(Y, D̂₋ᵢ)` and target `D̂ᵢ` for coordinate `i`.
fn composite(i: usize, y: &RealVector, d_hat: &DenseMatrix) -> Result<(RealVector, DenseMatrix)> {
    let (n, p) = d_hat.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("Y has {} rows, design has {n}", y.len())));
    }
    if i >= p {
        return Err(Error::InvalidArgument(format!("coordinate {i} outside {p} columns")));
    }
    let (yc, _) = center_vector(y);
    let (dc, _) = center_columns(d_hat);
    let mut design = DenseMatrix::zeros(n, p);
    design.set_column(0, &yc);
    let mut k = 1;
    for j in (0..p).filter(|&j| j != i) {
        design.set_column(k, &dc.column(j));
        k += 1;
    }
    Ok((dc.column(i).into_owned(), design))
}

/// Lasso of centered `D̂ᵢ` on centered `(Y, D̂₋ᵢ)` at penalty `mu`.
pub fn fit_inverse_regression(i: usize, y: &RealVector, d_hat: &DenseMatrix, mu: f64) -> Result<InverseRegressionFit> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("penalty must be nonnegative, got {mu}")));
    }
    let (target, design) = composite(i, y, d_hat)?;
    if target.iter().all(|v| *v == 0.0) {
        return Err(Error::NoInstrumentSignal(i));
    }
    let gd = GramDesign::new(&design)?;
    let sol = gd.solve(&gd.moments(&target)?, mu, &LassoSettings::default(), None, None)?;
    Ok(InverseRegressionFit { coordinate: i, theta_hat: sol.coefficients, mu, converged: sol.converged })
}

/// Second-stage residuals `ξ̂` and inverse-regression residuals `ζ̂ᵢ`, both
/// from centered data, with their divisor-`n` variances.
pub fn compute_residuals(
    i: usize,
    y: &RealVector,
    d_hat: &DenseMatrix,
    beta_hat: &RealVector,
    fit: &InverseRegressionFit,
) -> Result<ResidualPair> {
    let p = d_hat.ncols();
    if beta_hat.len() != p || fit.theta_hat.len() != p || fit.coordinate != i {
        return Err(Error::DimensionMismatch("coefficient vectors do not match the design".into()));
    }
    let (target, design) = composite(i, y, d_hat)?;
    let (yc, _) = center_vector(y);
    let (dc, _) = center_columns(d_hat);
    let xi = yc - dc * beta_hat;
    let zeta = target - design * &fit.theta_hat;
    let n = xi.len() as f64;
    Ok(ResidualPair {
        sigma2_xi: xi.norm_squared() / n,
        sigma2_zeta: zeta.norm_squared() / n,
        xi,
        zeta,
    })
}

/// `T̂ = T / (1 − T²/n)` when `T²/n < 1`, otherwise `T`.
pub fn transform_statistic(t: f64, n: usize) -> f64 {
    let ratio = t * t / n as f64;
    if ratio < 1.0 {
        t / (1.0 - ratio)
    } else {
        t
    }
}

pub(crate) fn statistic_from_moments(
    cross: f64,
    sigma2_xi: f64,
    sigma2_zeta: f64,
    beta_i: f64,
    theta_y: f64,
    n: usize,
) -> Result<(f64, f64)> {
    if !(sigma2_xi > DEGENERATE_VARIANCE) {
        return Err(Error::DegenerateVariance(sigma2_xi));
    }
    if !(sigma2_zeta > DEGENERATE_VARIANCE) {
        return Err(Error::DegenerateVariance(sigma2_zeta));
    }
    let corrected = cross + sigma2_xi * theta_y + sigma2_zeta * beta_i;
    let t = (n as f64).sqrt() * corrected / (sigma2_xi * sigma2_zeta).sqrt();
    Ok((t, transform_statistic(t, n)))
}

/// Bias-corrected statistic `Tᵢ` and its transform `T̂ᵢ`.
///
/// `Tᵢ = √n (ξ̂ᵀζ̂/n + σ̂²_ξ θ̂_Y + σ̂²_ζ β̂ᵢ) / (σ̂_ξ σ̂_ζ)` where `θ̂_Y` is the
/// response coefficient of the inverse regression.
pub fn test_statistic(residuals: &ResidualPair, beta_i: f64, theta_y: f64, n: usize) -> Result<(f64, f64)> {
    if residuals.xi.len() != n || residuals.zeta.len() != n {
        return Err(Error::DimensionMismatch("residual length differs from n".into()));
    }
    let cross = residuals.xi.dot(&residuals.zeta) / n as f64;
    statistic_from_moments(cross, residuals.sigma2_xi, residuals.sigma2_zeta, beta_i, theta_y, n)
}
