//! Synthetic confounded IV designs.
//!
//! Instruments are AR(1)-correlated Gaussians (ρ = 0.5). Each column of `Γ₀`
//! has `s2` nonzeros of magnitude `U[a, b]`; `β₀` has `s1` nonzeros of
//! magnitude `U[0.1, 0.3]`; signs are fair coins. The errors `(εₖ, ηₖ)` share
//! an AR(1) block (ρ = 0.2) for `ε`, unit variance for `η`, and a handful of
//! `ε`–`η` covariances fixed at 0.3, which is what makes naive regression biased.
//!
//! Every generator is a pure function of its parameters and a 64-bit seed.
//! Sub-streams are derived with [`mix_seed`], so replication `r` of scenario
//! `s` can be regenerated in isolation.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, standardize, DenseMatrix, RealVector};
use crate::multiple_testing::TruthLabels;
use crate::two_stage::IvDataset;

pub const INSTRUMENT_RHO: f64 = 0.5;
pub const ERROR_RHO: f64 = 0.2;
/// Resampling budget for a positive definite error covariance.
pub const MAX_COVARIANCE_ATTEMPTS: usize = 100;

const STREAM_INSTRUMENTS: u64 = 1;
const STREAM_GAMMA: u64 = 2;
const STREAM_BETA: u64 = 3;
const STREAM_COVARIANCE: u64 = 4;
const STREAM_ERRORS: u64 = 5;

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed: `splitmix(splitmix(base) ^ a) ^ b`, finalized once more.
///
/// Used both for generator sub-streams and for (scenario, replication) seeds.
pub fn mix_seed(base: u64, a: u64, b: u64) -> u64 {
    splitmix(splitmix(splitmix(base) ^ a.wrapping_mul(0xD6E8_FEB8_6659_FD93)) ^ b)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream, 0))
}

/// How nonzero entries of `β₀` are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaInterval {
    /// `U([−hi, −lo] ∪ [lo, hi])`: fair-coin sign times `U[lo, hi]`.
    Symmetric { lo: f64, hi: f64 },
    /// Uniform on the single interval `[lo, hi]` (e.g. `[−0.3, 0.3]`).
    Plain { lo: f64, hi: f64 },
}

impl Default for BetaInterval {
    fn default() -> Self {
        BetaInterval::Symmetric { lo: 0.1, hi: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub s1: usize,
    pub s2: usize,
    /// Magnitude bounds `(a, b)` for `Γ₀`.
    pub gamma_bounds: (f64, f64),
    pub beta_interval: BetaInterval,
    pub confound_count: usize,
    pub confound_value: f64,
    pub seed: u64,
    /// When set, `Γ₀`, `β₀` and `Σ_e` come from this seed instead of `seed`,
    /// so replications share one parameter draw and differ only in `Z` and
    /// the errors.
    pub parameter_seed: Option<u64>,
}

impl SimConfig {
    /// Design with `(s1, s2) = (10, 10)` and the default magnitudes.
    pub fn new(n: usize, p: usize, q: usize, seed: u64) -> Self {
        SimConfig {
            n,
            p,
            q,
            s1: 10.min(p),
            s2: 10.min(q),
            gamma_bounds: (0.75, 1.0),
            beta_interval: BetaInterval::default(),
            confound_count: 10.min(p),
            confound_value: 0.3,
            seed,
            parameter_seed: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n < 2 || self.p == 0 || self.q == 0 {
            return bad(format!("need n ≥ 2, p ≥ 1, q ≥ 1 (got {}, {}, {})", self.n, self.p, self.q));
        }
        if self.s1 > self.p || self.s2 > self.q || self.confound_count > self.p {
            return bad(format!(
                "sparsity exceeds dimension: s1={} p={}, s2={} q={}, confounded={}",
                self.s1, self.p, self.s2, self.q, self.confound_count
            ));
        }
        let (a, b) = self.gamma_bounds;
        if !(0.0 < a && a < b) {
            return bad(format!("Γ magnitude bounds need 0 < a < b, got ({a}, {b})"));
        }
        match self.beta_interval {
            BetaInterval::Symmetric { lo, hi } if !(0.0 <= lo && lo <= hi) => bad(format!("β bounds ({lo}, {hi})")),
            BetaInterval::Plain { lo, hi } if !(lo <= hi) => bad(format!("β bounds ({lo}, {hi})")),
            _ if !self.confound_value.is_finite() => bad("confounding value must be finite".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub gamma0: DenseMatrix,
    pub beta0: RealVector,
    /// `(p+1) × (p+1)` covariance of `(εₖ, ηₖ)`.
    pub sigma_e: DenseMatrix,
    /// Coordinates whose error is correlated with `η`.
    pub confounded: Vec<usize>,
    pub labels: TruthLabels,
}

/// `ρ^|i−j|`.
pub fn ar1_covariance(dim: usize, rho: f64) -> DenseMatrix {
    DenseMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Rows drawn from `N(0, Σ_z)` with AR(1) correlation 0.5, then standardized.
pub fn gen_instruments(n: usize, q: usize, seed: u64) -> Result<DenseMatrix> {
    if n < 2 || q == 0 {
        return Err(Error::InvalidArgument(format!("need n ≥ 2 and q ≥ 1, got {n}, {q}")));
    }
    let lower = cholesky_lower(&ar1_covariance(q, INSTRUMENT_RHO)).expect("AR(1) covariance is positive definite");
    let mut rng = rng(seed, STREAM_INSTRUMENTS);
    let raw = DenseMatrix::from_fn(n, q, |_, _| rng.sample(StandardNormal));
    let z = raw * lower.transpose();
    Ok(standardize(&z)?.0)
}

fn draw_magnitude(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let magnitude = draw_magnitude(rng, lo, hi);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// `q × p` matrix; each column has `s2` random positions filled with `±U[a, b]`.
pub fn gen_gamma(q: usize, p: usize, s2: usize, a: f64, b: f64, seed: u64) -> Result<DenseMatrix> {
    if s2 > q {
        return Err(Error::InvalidArgument(format!("s2 = {s2} exceeds q = {q}")));
    }
    let mut rng = rng(seed, STREAM_GAMMA);
    let mut gamma = DenseMatrix::zeros(q, p);
    for j in 0..p {
        let mut rows = sample(&mut rng, q, s2).into_vec();
        rows.sort_unstable();
        for i in rows {
            gamma[(i, j)] = signed(&mut rng, a, b);
        }
    }
    Ok(gamma)
}

/// Length-`p` vector with `s1` random nonzeros drawn from `interval`.
pub fn gen_beta(p: usize, s1: usize, interval: BetaInterval, seed: u64) -> Result<RealVector> {
    if s1 > p {
        return Err(Error::InvalidArgument(format!("s1 = {s1} exceeds p = {p}")));
    }
    let mut rng = rng(seed, STREAM_BETA);
    let mut beta = RealVector::zeros(p);
    let mut rows = sample(&mut rng, p, s1).into_vec();
    rows.sort_unstable();
    for i in rows {
        beta[i] = match interval {
            BetaInterval::Symmetric { lo, hi } => signed(&mut rng, lo, hi),
            BetaInterval::Plain { lo, hi } => loop {
                // an exact zero would silently shrink the support
                let v = draw_magnitude(&mut rng, lo, hi);
                if v != 0.0 {
                    break v;
                }
            },
        };
    }
    Ok(beta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCovariance {
    pub matrix: DenseMatrix,
    pub confounded: Vec<usize>,
    /// Number of position draws needed for positive definiteness.
    pub attempts: usize,
}

/// Joint covariance of `(ε, η)`: AR(1) (ρ = 0.2) on the `ε` block, unit
/// variance for `η`, and `confound_count` random `ε`–`η` entries set to
/// `confound_value`. Positions are redrawn until the matrix is positive definite.
pub fn gen_error_cov(p: usize, confound_count: usize, confound_value: f64, seed: u64) -> Result<ErrorCovariance> {
    if confound_count > p {
        return Err(Error::InvalidArgument(format!("{confound_count} confounded entries exceed p = {p}")));
    }
    let mut rng = rng(seed, STREAM_COVARIANCE);
    let mut base = DenseMatrix::zeros(p + 1, p + 1);
    base.view_mut((0, 0), (p, p)).copy_from(&ar1_covariance(p, ERROR_RHO));
    base[(p, p)] = 1.0;
    for attempt in 1..=MAX_COVARIANCE_ATTEMPTS {
        let mut confounded = sample(&mut rng, p, confound_count).into_vec();
        confounded.sort_unstable();
        let mut matrix = base.clone();
        for &i in &confounded {
            matrix[(i, p)] = confound_value;
            matrix[(p, i)] = confound_value;
        }
        if cholesky_lower(&matrix).is_some() {
            return Ok(ErrorCovariance { matrix, confounded, attempts: attempt });
        }
    }
    Err(Error::NotPositiveDefinite { attempts: MAX_COVARIANCE_ATTEMPTS })
}

/// Draws `(Z, X, Y)` and the generating parameters.
///
/// `X = ZΓ₀ + E`, `Y = Xβ₀ + η`, with rows of `(E, η)` i.i.d. `N(0, Σ_e)`.
pub fn gen_dataset(config: &SimConfig) -> Result<(IvDataset, SimTruth)> {
    config.validate()?;
    let SimConfig { n, p, q, s1, s2, .. } = *config;
    let seed = config.seed;
    let fixed = config.parameter_seed.unwrap_or(seed);
    let z = gen_instruments(n, q, seed)?;
    let gamma0 = gen_gamma(q, p, s2, config.gamma_bounds.0, config.gamma_bounds.1, fixed)?;
    let beta0 = gen_beta(p, s1, config.beta_interval, fixed)?;
    let cov = gen_error_cov(p, config.confound_count, config.confound_value, fixed)?;
    let lower = cholesky_lower(&cov.matrix).expect("checked positive definite");

    let mut rng = rng(seed, STREAM_ERRORS);
    let raw = DenseMatrix::from_fn(n, p + 1, |_, _| rng.sample(StandardNormal));
    let errors = raw * lower.transpose();
    let e = errors.columns(0, p).into_owned();
    let eta = errors.column(p).into_owned();

    let x = &z * &gamma0 + e;
    let y = &x * &beta0 + eta;
    let labels = TruthLabels::from_coefficients(beta0.as_slice());
    let dataset = IvDataset::new(y, x, z)?;
    Ok((dataset, SimTruth { gamma0, beta0, sigma_e: cov.matrix, confounded: cov.confounded, labels }))
}
