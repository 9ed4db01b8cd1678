//! Inverse-regression test statistics for single coefficients.
//!
//! For coordinate `i`, the predicted covariate `D̂ᵢ` is regressed (Lasso) on the
//! response and the remaining predicted covariates. The bias-corrected sample
//! covariance between that residual and the second-stage residual, after a
//! variance-stabilizing transform, is approximately `N(0, 1)` when `βᵢ = 0`.

pub mod normal;

mod delta;
mod statistic;

pub use delta::{delta_objective, select_delta, DeltaSelection, DELTA_GRID, DELTA_STEP};
pub use statistic::{compute_residuals, fit_inverse_regression, test_statistic, transform_statistic, InverseRegressionFit, ResidualPair};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{center_columns, center_vector, ensure_finite_vector, max_abs, DenseMatrix, RealVector};
use crate::solver::{CrossMoments, GramDesign, LassoSettings};

use normal::two_sided_pvalue;
use statistic::statistic_from_moments;

/// Why a coordinate's statistic was not computed normally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordinateFlag {
    /// The predicted covariate is identically zero (or constant); statistic set to 0, p-value 1.
    NoInstrumentSignal,
    /// A residual variance fell below the numerical floor; statistic set to 0, p-value 1.
    DegenerateVariance,
    /// The inverse-regression Lasso hit its sweep limit; the statistic is kept.
    NotConverged,
}

impl CoordinateFlag {
    pub fn excludes_statistic(&self) -> bool {
        !matches!(self, CoordinateFlag::NotConverged)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CoordinateFlag::NoInstrumentSignal => "no_instrument_signal",
            CoordinateFlag::DegenerateVariance => "degenerate_variance",
            CoordinateFlag::NotConverged => "not_converged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestStatistics {
    pub t: RealVector,
    pub t_hat: RealVector,
    pub pvalues: RealVector,
    pub delta_hat: u32,
    /// Inverse-regression penalty used for each coordinate.
    pub mu: RealVector,
    pub flags: Vec<Option<CoordinateFlag>>,
    /// Tuning objective for each grid value of δ (empty when δ was fixed).
    pub delta_objective: Vec<f64>,
}

/// How the inverse-regression penalty scale δ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaChoice {
    /// Minimize the calibration objective over δ = 1..=100.
    Select,
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOptions {
    pub settings: LassoSettings,
    pub delta: DeltaChoice,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions { settings: LassoSettings::default(), delta: DeltaChoice::Select }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct CoordinateStat {
    t: f64,
    t_hat: f64,
    flag: Option<CoordinateFlag>,
}

impl CoordinateStat {
    fn excluded(flag: CoordinateFlag) -> Self {
        CoordinateStat { t: 0.0, t_hat: 0.0, flag: Some(flag) }
    }
}

/// Centered data shared by every inverse regression of one fitted model.
struct InverseSystem<'a> {
    gram: GramDesign<'a>,
    xi: RealVector,
    /// `Wᵀξ̂ / n` where `W = (Y, D̂)` centered.
    w_xi: Vec<f64>,
    sigma2_xi: f64,
    beta_hat: &'a RealVector,
    signal: Vec<bool>,
    n: usize,
}

impl InverseSystem<'_> {
    fn coordinate(&self, i: usize, mu: f64, warm: &mut [f64], settings: &LassoSettings) -> Result<CoordinateStat> {
        if !self.signal[i] {
            warm.iter_mut().for_each(|v| *v = 0.0);
            return Ok(CoordinateStat::excluded(CoordinateFlag::NoInstrumentSignal));
        }
        let c = i + 1;
        let moments: CrossMoments = self.gram.column_moments(c);
        let sol = self.gram.solve(&moments, mu, settings, Some(warm), Some(c))?;
        warm.copy_from_slice(sol.coefficients.as_slice());
        let theta = sol.coefficients.as_slice();

        // ζ̂ = W_c − Wθ, and Σξ̂ζ̂/n = (Wᵀξ̂/n)_c − θᵀ(Wᵀξ̂/n)
        let w = self.gram.design();
        let mut zeta = w.column(c).into_owned();
        for (k, &coef) in theta.iter().enumerate() {
            if coef != 0.0 {
                zeta.axpy(-coef, &w.column(k), 1.0);
            }
        }
        let nf = self.n as f64;
        let sigma2_zeta = zeta.norm_squared() / nf;
        let cross = self.xi.dot(&zeta) / nf;
        debug_assert!({
            let alt = self.w_xi[c] - theta.iter().zip(&self.w_xi).map(|(a, b)| a * b).sum::<f64>();
            (alt - cross).abs() <= 1e-8 * (1.0 + cross.abs())
        });
        match statistic_from_moments(cross, self.sigma2_xi, sigma2_zeta, self.beta_hat[i], theta[0], self.n) {
            Ok((t, t_hat)) => Ok(CoordinateStat {
                t,
                t_hat,
                flag: (!sol.converged).then_some(CoordinateFlag::NotConverged),
            }),
            Err(Error::DegenerateVariance(_)) => Ok(CoordinateStat::excluded(CoordinateFlag::DegenerateVariance)),
            Err(e) => Err(e),
        }
    }
}

/// Inverse-regression statistics for every coordinate of a fitted two-stage model.
pub fn run_inference(y: &RealVector, d_hat: &DenseMatrix, beta_hat: &RealVector, options: &InferenceOptions) -> Result<TestStatistics> {
    let n = y.len();
    let p = d_hat.ncols();
    if d_hat.nrows() != n || beta_hat.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "Y has {n} rows, design is {}×{}, coefficients have {} entries",
            d_hat.nrows(),
            p,
            beta_hat.len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two observations".into()));
    }
    ensure_finite_vector(beta_hat, "coefficients")?;

    let (yc, _) = center_vector(y);
    let (dc, _) = center_columns(d_hat);
    let signal: Vec<bool> = (0..p)
        .map(|j| max_abs(d_hat.column(j).as_slice()) > 0.0 && max_abs(dc.column(j).as_slice()) > 0.0)
        .collect();

    let mut w = DenseMatrix::zeros(n, p + 1);
    w.set_column(0, &yc);
    w.columns_mut(1, p).copy_from(&dc);
    let xi = &yc - &dc * beta_hat;
    let nf = n as f64;
    let w_xi: Vec<f64> = w.tr_mul(&xi).iter().map(|v| v / nf).collect();
    let sigma2_xi = xi.norm_squared() / nf;

    let gram = GramDesign::new(&w)?;
    // Σ̂ᴰᵢᵢ with divisor n
    let scales: Vec<f64> = (0..p)
        .map(|i| (gram.gram()[(i + 1, i + 1)] * (p as f64).ln() / nf).sqrt())
        .collect();

    let system = InverseSystem { gram, xi, w_xi, sigma2_xi, beta_hat, signal, n };
    let mut warm = vec![vec![0.0; p + 1]; p];

    let mut evaluate = |mu: &[f64]| -> Result<Vec<CoordinateStat>> {
        warm.par_iter_mut()
            .enumerate()
            .map(|(i, state)| system.coordinate(i, mu[i], state, &options.settings))
            .collect()
    };

    let (delta_hat, mu, stats, objective) = match options.delta {
        DeltaChoice::Fixed(delta) => {
            if delta == 0 {
                return Err(Error::InvalidArgument("δ must be positive".into()));
            }
            let mu = delta::mu_for(delta, &scales);
            let stats = evaluate(&mu)?;
            (delta, mu, stats, Vec::new())
        }
        DeltaChoice::Select => {
            let mut cache: Vec<Option<Vec<CoordinateStat>>> = vec![None; DELTA_GRID as usize];
            let selection = select_delta(&scales, |delta, mu| {
                let stats = evaluate(mu)?;
                let t_hat = stats.iter().map(|s| s.t_hat).collect();
                cache[(delta - 1) as usize] = Some(stats);
                Ok(t_hat)
            })?;
            let stats = cache[(selection.delta_hat - 1) as usize].take().expect("every δ was evaluated");
            (selection.delta_hat, selection.mu, stats, selection.objective)
        }
    };

    let t = RealVector::from_iterator(p, stats.iter().map(|s| s.t));
    let t_hat = RealVector::from_iterator(p, stats.iter().map(|s| s.t_hat));
    let pvalues = RealVector::from_iterator(
        p,
        stats.iter().map(|s| match s.flag {
            Some(f) if f.excludes_statistic() => 1.0,
            _ => two_sided_pvalue(s.t_hat),
        }),
    );
    Ok(TestStatistics {
        t,
        t_hat,
        pvalues,
        delta_hat,
        mu: RealVector::from_vec(mu),
        flags: stats.iter().map(|s| s.flag).collect(),
        delta_objective: objective,
    })
}

/// The same statistics computed on the raw covariates, as if they were
/// uncorrelated with the response error.
pub fn run_inference_naive(y: &RealVector, x: &DenseMatrix, beta_naive: &RealVector, options: &InferenceOptions) -> Result<TestStatistics> {
    run_inference(y, x, beta_naive, options)
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
    fn single_coordinate_uses_response_only() {
        let d = normals(30, 1, 1);
        let y = RealVector::from_fn(30, |i, _| d[(i, 0)] * 0.5 + ((i * 13) % 7) as f64 * 0.2);
        let beta = RealVector::from_vec(vec![0.4]);
        let stats = run_inference(&y, &d, &beta, &InferenceOptions::default()).unwrap();
        assert_eq!(stats.t_hat.len(), 1);
        assert_eq!(stats.delta_hat, 1);
        assert_eq!(stats.mu[0], 0.0);
        assert!(stats.flags[0].is_none());
    }

    #[test]
    fn all_zero_design_flags_everything() {
        let d = DenseMatrix::zeros(20, 4);
        let y = RealVector::from_fn(20, |i, _| i as f64);
        let stats = run_inference(&y, &d, &RealVector::zeros(4), &InferenceOptions::default()).unwrap();
        assert!(stats.flags.iter().all(|f| *f == Some(CoordinateFlag::NoInstrumentSignal)));
        assert!(stats.pvalues.iter().all(|p| *p == 1.0));
        assert!(stats.t_hat.iter().all(|t| *t == 0.0));
        assert_eq!(stats.delta_hat, 1);
    }

    #[test]
    fn zero_column_is_flagged_but_others_are_not() {
        let mut d = normals(60, 4, 2);
        d.column_mut(2).fill(0.0);
        let y = RealVector::from_fn(60, |i, _| d[(i, 0)] + ((i * 7) % 5) as f64 * 0.3);
        let beta = RealVector::from_vec(vec![0.9, 0.0, 0.0, 0.0]);
        let stats = run_inference(&y, &d, &beta, &InferenceOptions::default()).unwrap();
        assert_eq!(stats.flags[2], Some(CoordinateFlag::NoInstrumentSignal));
        assert_eq!(stats.pvalues[2], 1.0);
        assert!(stats.flags[0].is_none());
        assert!(stats.pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn naive_is_definitional() {
        let d = normals(40, 5, 3);
        let y = RealVector::from_fn(40, |i, _| d[(i, 1)] - d[(i, 4)] * 0.5 + (i % 4) as f64 * 0.1);
        let beta = RealVector::from_vec(vec![0.0, 0.8, 0.0, 0.0, -0.3]);
        let opts = InferenceOptions { delta: DeltaChoice::Fixed(30), ..Default::default() };
        assert_eq!(run_inference(&y, &d, &beta, &opts).unwrap(), run_inference_naive(&y, &d, &beta, &opts).unwrap());
    }

    #[test]
    fn shape_errors() {
        let d = normals(10, 3, 4);
        let y = RealVector::zeros(10);
        assert!(run_inference(&y, &d, &RealVector::zeros(2), &InferenceOptions::default()).is_err());
        let opts = InferenceOptions { delta: DeltaChoice::Fixed(0), ..Default::default() };
        assert!(run_inference(&y, &d, &RealVector::zeros(3), &opts).is_err());
    }
}
