use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, RealVector};

use super::lasso::{CrossMoments, GramDesign, LassoSettings};
use crate::inference::normal::normal_upper_quantile;

pub const SCALED_SIGMA_TOLERANCE: f64 = 1e-8;
pub const SCALED_MAX_ITERATIONS: usize = 50;
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLassoFit {
    pub coefficients: RealVector,
    /// Noise level estimate `‖y − Xβ̂‖₂/√n`.
    pub sigma: f64,
    /// Penalty of the final Lasso fit, `λ₀·σ̂`.
    pub lambda: f64,
    pub iterations: usize,
    /// Whether the inner Lasso fits all converged.
    pub converged: bool,
}

/// Universal penalty level `√(2·log m / n)`.
pub fn universal_lambda(nobs: usize, nvars: usize) -> f64 {
    (2.0 * (nvars as f64).ln() / nobs as f64).sqrt()
}

/// Sun and Zhang's quantile-based level `√(2/n)·L`, where `L > 0` solves
/// `L = Φ⁻¹(1 − k/m)` with `k = L⁴ + 2L²`. Smaller than the universal level;
/// it targets the expected sparsity rather than a union bound over all `m`
/// coordinates.
pub fn quantile_lambda(nobs: usize, nvars: usize) -> f64 {
    let m = nvars as f64;
    let k = |l: f64| l.powi(4) + 2.0 * l * l;
    // Φ⁻¹(1 − k(L)/m) − L falls from +∞ at 0 to below zero once k(L) = m/2
    let gap = |l: f64| normal_upper_quantile(k(l) / m).expect("k/m in (0, 1/2]") - l;
    let (mut lo, mut hi) = (0.0_f64, ((1.0 + m / 2.0).sqrt() - 1.0).sqrt());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (2.0 / nobs as f64).sqrt() * 0.5 * (lo + hi)
}

/// Base penalty level `λ₀` of the scaled Lasso (the fitted penalty is `λ₀σ̂`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScaledPenalty {
    /// `√(2·log m / n)`.
    Universal,
    /// See [`quantile_lambda`].
    #[default]
    Quantile,
}

impl ScaledPenalty {
    pub fn lambda0(&self, nobs: usize, nvars: usize) -> f64 {
        match self {
            ScaledPenalty::Universal => universal_lambda(nobs, nvars),
            ScaledPenalty::Quantile => quantile_lambda(nobs, nvars),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ScaledPenalty::Universal => "universal",
            ScaledPenalty::Quantile => "quantile",
        }
    }
}

/// Joint estimate of coefficients and noise level: alternate a Lasso fit at
/// `λ = λ₀σ̂` with `σ̂ = ‖y − Xβ̂‖₂/√n` until σ̂ settles.
pub fn scaled_lasso(response: &RealVector, design: &DenseMatrix, penalty: ScaledPenalty) -> Result<ScaledLassoFit> {
    let gd = GramDesign::new(design)?;
    gd.scaled_lasso(response, penalty, &LassoSettings::default())
}

impl GramDesign<'_> {
    pub fn scaled_lasso(&self, response: &RealVector, penalty: ScaledPenalty, settings: &LassoSettings) -> Result<ScaledLassoFit> {
        let moments = self.moments(response)?;
        self.scaled_lasso_with(response, &moments, penalty, settings)
    }

    pub(crate) fn scaled_lasso_with(
        &self,
        response: &RealVector,
        moments: &CrossMoments,
        penalty: ScaledPenalty,
        settings: &LassoSettings,
    ) -> Result<ScaledLassoFit> {
        let n = self.nobs();
        if n < 2 {
            return Err(Error::InvalidArgument("scaled Lasso needs at least two observations".into()));
        }
        let lambda0 = penalty.lambda0(n, self.nvars());
        let rms = |beta: &RealVector| (response - self.design() * beta).norm() / (n as f64).sqrt();

        let mut beta = RealVector::zeros(self.nvars());
        let mut sigma = rms(&beta);
        if sigma < SIGMA_FLOOR {
            return Err(Error::DegenerateResidual { threshold: SIGMA_FLOOR });
        }
        let mut converged = true;
        let mut iterations = 0;
        while iterations < SCALED_MAX_ITERATIONS {
            iterations += 1;
            let fit = self.solve(moments, lambda0 * sigma, settings, Some(beta.as_slice()), None)?;
            converged &= fit.converged;
            beta = fit.coefficients;
            let updated = rms(&beta);
            if updated < SIGMA_FLOOR {
                return Err(Error::DegenerateResidual { threshold: SIGMA_FLOOR });
            }
            let change = (updated - sigma).abs();
            sigma = updated;
            if change <= SCALED_SIGMA_TOLERANCE {
                break;
            }
        }
        Ok(ScaledLassoFit { coefficients: beta, sigma, lambda: lambda0 * sigma, iterations, converged })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve_lasso, LassoProblem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, m: usize, seed: u64) -> (RealVector, DenseMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DenseMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        let noise = RealVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        (noise, x)
    }

    #[test]
    fn zero_response_is_degenerate() {
        let (_, x) = gaussian(20, 4, 1);
        let y = RealVector::zeros(20);
        assert_eq!(scaled_lasso(&y, &x, ScaledPenalty::Universal).unwrap_err(), Error::DegenerateResidual { threshold: SIGMA_FLOOR });
    }

    #[test]
    fn pure_noise_sigma_is_near_one() {
        let mut hits = 0;
        for seed in 0..100 {
            let (y, x) = gaussian(200, 10, 1000 + seed);
            let fit = scaled_lasso(&y, &x, ScaledPenalty::Universal).unwrap();
            if (0.8..=1.2).contains(&fit.sigma) {
                hits += 1;
            }
        }
        assert!(hits >= 95, "only {hits}/100 within [0.8, 1.2]");
    }

    /// Plain re-implementation of the alternation on top of the residual-form solver.
    fn reference_scaled_lasso(y: &RealVector, x: &DenseMatrix) -> (RealVector, f64, f64) {
        let n = y.len() as f64;
        let lambda0 = (2.0 * (x.ncols() as f64).ln() / n).sqrt();
        let mut sigma = y.norm() / n.sqrt();
        let mut beta = vec![0.0; x.ncols()];
        for _ in 0..50 {
            let problem = LassoProblem::new(y, x, lambda0 * sigma).unwrap();
            let fit = solve_lasso(&problem, &LassoSettings::default(), Some(&beta)).unwrap();
            beta = fit.coefficients.as_slice().to_vec();
            let r = y - x * &fit.coefficients;
            let next = r.norm() / n.sqrt();
            let done = (next - sigma).abs() <= 1e-8;
            sigma = next;
            if done {
                break;
            }
        }
        (RealVector::from_vec(beta), sigma, lambda0 * sigma)
    }

    #[test]
    fn matches_reference_alternation() {
        let (noise, x) = gaussian(50, 5, 77);
        let truth = RealVector::from_vec(vec![1.5, 0.0, -0.8, 0.0, 0.0]);
        let y = &x * truth + noise * 0.7;
        let fit = scaled_lasso(&y, &x, ScaledPenalty::Universal).unwrap();
        let (beta, sigma, lambda) = reference_scaled_lasso(&y, &x);
        assert!((fit.sigma - sigma).abs() < 1e-7, "{} vs {}", fit.sigma, sigma);
        assert!((fit.lambda - lambda).abs() < 1e-7);
        assert!((fit.coefficients - beta).amax() < 1e-6);
    }

    #[test]
    fn universal_lambda_value() {
        assert!((universal_lambda(200, 100) - (2.0 * 100f64.ln() / 200.0).sqrt()).abs() < 1e-15);
        assert_eq!(universal_lambda(10, 1), 0.0);
    }

    #[test]
    fn quantile_lambda_fixed_point() {
        // reference values from scipy's norm.isf under the same iteration
        for (m, level) in [(100, 1.4099444131226992), (500, 1.8141467604885464), (1000, 1.9867553607021438)] {
            let lam = quantile_lambda(200, m);
            assert!((lam - 0.1 * level).abs() < 1e-9, "m={m}: {lam}");
            // the defining relation L = Φ⁻¹(1 − (L⁴ + 2L²)/m)
            let l = lam / 0.1;
            let k = l.powi(4) + 2.0 * l * l;
            assert!((normal_upper_quantile(k / m as f64).unwrap() - l).abs() < 1e-9);
            assert!(lam < universal_lambda(200, m));
        }
        assert_eq!(ScaledPenalty::Universal.lambda0(200, 100), universal_lambda(200, 100));
    }
}
