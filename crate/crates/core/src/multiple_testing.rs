//! Rejection thresholds for the statistic vector and realized error metrics.
//!
//! Both procedures reject `H₀ᵢ` when `|T̂ᵢ| ≥ t̂₀`; they differ only in how
//! `t̂₀` is chosen. The FDR rule estimates the number of false rejections at
//! threshold `t` by `2p(1 − Φ(t))`; the FDV rule inverts `G(t) = 2(1 − Φ(t))`
//! at `k/p`.

use crate::error::{Error, Result};
use crate::inference::normal::{normal_sf, normal_upper_quantile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMode {
    /// False discovery rate at level α.
    Fdr(f64),
    /// Expected number of falsely discovered variables at level k.
    Fdv(f64),
}

impl ControlMode {
    pub fn level(&self) -> f64 {
        match *self {
            ControlMode::Fdr(a) | ControlMode::Fdv(a) => a,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControlMode::Fdr(_) => "fdr",
            ControlMode::Fdv(_) => "fdv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionSet {
    pub mode: ControlMode,
    pub threshold: f64,
    /// Rejected coordinates in increasing order.
    pub rejected: Vec<usize>,
}

impl DecisionSet {
    pub fn new(mode: ControlMode, t_hat: &[f64]) -> Result<Self> {
        let threshold = match mode {
            ControlMode::Fdr(alpha) => fdr_threshold(t_hat, alpha)?,
            ControlMode::Fdv(k) => fdv_threshold(t_hat.len(), k)?,
        };
        Ok(DecisionSet { mode, threshold, rejected: reject(t_hat, threshold) })
    }
}

/// Upper end `√(2 log p)` of the FDR threshold search range.
pub fn fdr_search_limit(p: usize) -> f64 {
    (2.0 * (p as f64).ln()).sqrt()
}

/// Number of `|values| ≥ t`.
fn count_at_least(sorted_abs: &[f64], t: f64) -> usize {
    sorted_abs.len() - sorted_abs.partition_point(|&v| v < t)
}

/// Smallest `t ∈ [0, √(2 log p)]` with `2p(1 − Φ(t)) / max(#{|T̂ᵢ| ≥ t}, 1) ≤ α`,
/// or `√(2 log p)` when no such `t` exists.
///
/// The rejection count is a step function that only changes at the observed
/// `|T̂ᵢ|`. Between consecutive breakpoints the count is constant and the
/// numerator is continuous and decreasing, so the bound is met from
/// `max(lower, G⁻¹(α·R/p))` onward; the first segment where that point lies
/// inside the segment yields the exact infimum.
pub fn fdr_threshold(t_hat: &[f64], alpha: f64) -> Result<f64> {
    let p = t_hat.len();
    if p < 2 {
        return Err(Error::InvalidArgument(format!("FDR threshold needs p ≥ 2, got {p}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("α must lie in (0, 1), got {alpha}")));
    }
    if t_hat.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("statistic vector".into()));
    }
    let limit = fdr_search_limit(p);
    let pf = p as f64;
    let mut sorted: Vec<f64> = t_hat.iter().map(|t| t.abs()).collect();
    sorted.sort_by(f64::total_cmp);

    let ratio = |t: f64| 2.0 * pf * normal_sf(t) / count_at_least(&sorted, t).max(1) as f64;
    if ratio(0.0) <= alpha {
        return Ok(0.0);
    }

    let mut cuts: Vec<f64> = sorted.iter().copied().filter(|&v| v > 0.0 && v < limit).collect();
    cuts.dedup();
    cuts.push(limit);

    let mut lower = 0.0;
    for &upper in &cuts {
        let rejected = count_at_least(&sorted, upper).max(1) as f64;
        let tail = alpha * rejected / (2.0 * pf);
        let needed = if tail >= 0.5 { 0.0 } else { normal_upper_quantile(tail)? };
        let candidate = needed.max(lower);
        if candidate <= upper {
            return Ok(candidate);
        }
        lower = upper;
    }
    Ok(limit)
}

/// `Φ⁻¹(1 − k/(2p))`, the point where `p·G(t) = k`.
pub fn fdv_threshold(p: usize, k: f64) -> Result<f64> {
    if p == 0 {
        return Err(Error::InvalidArgument("FDV threshold needs p ≥ 1".into()));
    }
    let ratio = k / p as f64;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!("FDV level needs 0 < k/p < 1, got k = {k}, p = {p}")));
    }
    normal_upper_quantile(ratio / 2.0)
}

/// Indices with `|T̂ᵢ| ≥ threshold`.
pub fn reject(t_hat: &[f64], threshold: f64) -> Vec<usize> {
    t_hat
        .iter()
        .enumerate()
        .filter(|(_, t)| t.abs() >= threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Which coordinates are truly null.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthLabels {
    is_null: Vec<bool>,
}

impl TruthLabels {
    pub fn from_null_flags(is_null: Vec<bool>) -> Self {
        TruthLabels { is_null }
    }

    /// Nulls are the exact zeros of the true coefficient vector.
    pub fn from_coefficients(beta: &[f64]) -> Self {
        TruthLabels { is_null: beta.iter().map(|b| *b == 0.0).collect() }
    }

    pub fn len(&self) -> usize {
        self.is_null.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_null.is_empty()
    }

    pub fn is_null(&self, i: usize) -> bool {
        self.is_null[i]
    }

    pub fn nulls(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_null[i]).collect()
    }

    pub fn alternatives(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_null[i]).collect()
    }

    pub fn null_count(&self) -> usize {
        self.is_null.iter().filter(|b| **b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    /// False discovery proportion `|R ∩ H₀| / max(|R|, 1)`.
    pub fdp: f64,
    pub false_discoveries: usize,
    pub true_discoveries: usize,
    pub rejected: usize,
    /// Share of alternatives rejected (FDR mode) or their raw count (FDV mode).
    pub power: f64,
}

pub fn score(decision: &DecisionSet, truth: &TruthLabels) -> Result<ErrorMetrics> {
    if let Some(&bad) = decision.rejected.iter().find(|&&i| i >= truth.len()) {
        return Err(Error::DimensionMismatch(format!("rejected index {bad} outside {} labels", truth.len())));
    }
    let false_discoveries = decision.rejected.iter().filter(|&&i| truth.is_null(i)).count();
    let rejected = decision.rejected.len();
    let true_discoveries = rejected - false_discoveries;
    let alternatives = truth.len() - truth.null_count();
    let power = match decision.mode {
        ControlMode::Fdr(_) if alternatives == 0 => 0.0,
        ControlMode::Fdr(_) => true_discoveries as f64 / alternatives as f64,
        ControlMode::Fdv(_) => true_discoveries as f64,
    };
    Ok(ErrorMetrics {
        fdp: false_discoveries as f64 / rejected.max(1) as f64,
        false_discoveries,
        true_discoveries,
        rejected,
        power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::normal::normal_cdf;
    use proptest::prelude::*;

    /// First point of a uniform grid on `[0, √(2 log p)]` meeting the FDR bound.
    fn grid_threshold(t_hat: &[f64], alpha: f64, points: usize) -> (f64, f64) {
        let p = t_hat.len() as f64;
        let limit = fdr_search_limit(t_hat.len());
        let step = limit / (points - 1) as f64;
        for k in 0..points {
            let t = k as f64 * step;
            let r = t_hat.iter().filter(|v| v.abs() >= t).count().max(1) as f64;
            if 2.0 * p * (1.0 - normal_cdf(t)) / r <= alpha {
                return (t, step);
            }
        }
        (limit, step)
    }

    #[test]
    fn all_zero_statistics_fall_back_to_limit() {
        let t = vec![0.0; 100];
        let limit = (2.0 * 100f64.ln()).sqrt();
        assert!((limit - 3.0348542587702925).abs() < 1e-12);
        // even at the limit the estimated ratio is far above α
        assert!(200.0 * normal_sf(limit) > 0.2);
        assert_eq!(fdr_threshold(&t, 0.05).unwrap(), limit);
        assert!(reject(&t, limit).is_empty());
    }

    #[test]
    fn four_strong_signals() {
        // 8(1 − Φ(t))/4 ≤ 0.05 needs t ≥ 1.96, beyond √(2 log 4) ≈ 1.665
        let t = vec![10.0; 4];
        let exact = fdr_threshold(&t, 0.05).unwrap();
        let limit = (2.0 * 4f64.ln()).sqrt();
        assert_eq!(exact, limit);
        let (grid, _) = grid_threshold(&t, 0.05, 1_000_001);
        assert_eq!(grid, limit);
        assert!(reject(&t, exact).len() == 4);
    }

    #[test]
    fn threshold_between_order_statistics() {
        // 20 strong signals among 100: 200(1 − Φ(t))/20 ≤ 0.05 at Φ⁻¹(0.995)
        let mut t = vec![0.0; 100];
        t[..20].fill(10.0);
        let exact = fdr_threshold(&t, 0.05).unwrap();
        assert!((exact - 2.5758293035489004).abs() < 1e-12, "{exact}");
        let (grid, step) = grid_threshold(&t, 0.05, 1_000_001);
        assert!(grid >= exact - 1e-12 && grid - exact <= step + 1e-12);
    }

    #[test]
    fn fdv_reference() {
        assert!((fdv_threshold(100, 2.0).unwrap() - 2.326348).abs() < 1e-6);
        assert!(matches!(fdv_threshold(100, 100.0), Err(Error::Domain(_))));
        assert!(fdv_threshold(100, 0.0).is_err());
        for (p, k) in [(100, 2.0), (200, 3.0), (500, 4.0), (10, 0.5)] {
            let t = fdv_threshold(p, k).unwrap();
            assert!((2.0 * normal_sf(t) * p as f64 - k).abs() < 1e-8);
        }
    }

    #[test]
    fn reject_cases() {
        let t = [-3.0, 1.0, 2.5];
        assert_eq!(reject(&t, 0.0), vec![0, 1, 2]);
        assert!(reject(&t, 3.5).is_empty());
        assert_eq!(reject(&t, 2.5), vec![0, 2]);
    }

    #[test]
    fn score_cases() {
        let truth = TruthLabels::from_null_flags(vec![false, true, true, true, false, false]);
        let none = DecisionSet { mode: ControlMode::Fdr(0.1), threshold: 9.0, rejected: vec![] };
        let m = score(&none, &truth).unwrap();
        assert_eq!((m.fdp, m.power), (0.0, 0.0));

        let perfect = DecisionSet { mode: ControlMode::Fdr(0.1), threshold: 1.0, rejected: vec![0, 4, 5] };
        let m = score(&perfect, &truth).unwrap();
        assert_eq!((m.fdp, m.power), (0.0, 1.0));

        // H₀ = {1,2,3} (1-based) is {0,1,2} here; rejected {1,4,5} → {0,3,4}
        let truth = TruthLabels::from_null_flags(vec![true, true, true, false, false, false]);
        let mixed = DecisionSet { mode: ControlMode::Fdr(0.1), threshold: 1.0, rejected: vec![0, 3, 4] };
        let m = score(&mixed, &truth).unwrap();
        assert!((m.fdp - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.power - 2.0 / 3.0).abs() < 1e-15);

        let fdv = DecisionSet { mode: ControlMode::Fdv(2.0), ..mixed };
        let m = score(&fdv, &truth).unwrap();
        assert_eq!(m.power, 2.0);
        assert_eq!(m.false_discoveries, 1);
    }

    #[test]
    fn input_validation() {
        assert!(fdr_threshold(&[1.0], 0.1).is_err());
        assert!(fdr_threshold(&[1.0, 2.0], 0.0).is_err());
        assert!(fdr_threshold(&[1.0, 2.0], 1.0).is_err());
        assert!(fdr_threshold(&[1.0, f64::NAN], 0.1).is_err());
    }

    fn stats() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![3 => -2.5f64..2.5, 1 => -8.0f64..8.0, 1 => Just(0.0), 1 => Just(3.0)],
            2..50,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn alpha_monotone(t in stats(), a in 0.01f64..0.5, b in 0.01f64..0.5) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(fdr_threshold(&t, lo).unwrap() >= fdr_threshold(&t, hi).unwrap());
        }

        #[test]
        fn threshold_stays_in_range(t in stats(), a in 0.01f64..0.5) {
            let t0 = fdr_threshold(&t, a).unwrap();
            prop_assert!(t0 >= 0.0 && t0 <= fdr_search_limit(t.len()));
        }

        #[test]
        fn scan_matches_fine_grid(t in stats(), a in 0.02f64..0.4) {
            let exact = fdr_threshold(&t, a).unwrap();
            let (grid, step) = grid_threshold(&t, a, 20_001);
            prop_assert!(grid >= exact - 1e-9 && grid - exact <= step + 1e-9, "exact {} grid {}", exact, grid);
        }

        #[test]
        fn reject_is_idempotent_and_order_free(t in stats(), thr in 0.0f64..4.0) {
            let r = reject(&t, thr);
            let mut rev: Vec<f64> = t.clone();
            rev.reverse();
            let mut back: Vec<usize> = reject(&rev, thr).into_iter().map(|i| t.len() - 1 - i).collect();
            back.sort();
            prop_assert_eq!(&r, &back);
            let sub: Vec<f64> = r.iter().map(|&i| t[i]).collect();
            prop_assert_eq!(reject(&sub, thr).len(), sub.len());
        }

        #[test]
        fn score_identity(flags in prop::collection::vec(any::<bool>(), 1..40), picks in prop::collection::vec(any::<bool>(), 40)) {
            let truth = TruthLabels::from_null_flags(flags.clone());
            let rejected: Vec<usize> = (0..flags.len()).filter(|&i| picks[i]).collect();
            let d = DecisionSet { mode: ControlMode::Fdr(0.1), threshold: 0.0, rejected: rejected.clone() };
            let m = score(&d, &truth).unwrap();
            let fd = m.fdp * rejected.len().max(1) as f64;
            prop_assert!((fd - fd.round()).abs() < 1e-9);
            prop_assert_eq!(fd.round() as usize + m.true_discoveries, rejected.len());
        }
    }
}
