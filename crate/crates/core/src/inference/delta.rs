use crate::error::{Error, Result};

use super::normal::normal_upper_quantile;

/// δ ranges over `1..=DELTA_GRID`.
pub const DELTA_GRID: u32 = 100;
/// `μᵢ = DELTA_STEP · δ · √(Σ̂ᴰᵢᵢ log p / n)`.
pub const DELTA_STEP: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSelection {
    pub delta_hat: u32,
    pub mu: Vec<f64>,
    /// Objective for δ = 1..=100 (index δ − 1).
    pub objective: Vec<f64>,
}

pub(crate) fn mu_for(delta: u32, scales: &[f64]) -> Vec<f64> {
    scales.iter().map(|s| DELTA_STEP * delta as f64 * s).collect()
}

/// `Σ_{k=30}^{90} (#{|T̂ᵢ| ≥ Φ⁻¹(1 − k/200)} / (kp/100) − 1)²`.
///
/// Under exact normality the two-sided tail count at level k/100 is k·p/100,
/// so the objective measures how far the statistics are from calibrated.
pub fn delta_objective(t_hat: &[f64]) -> f64 {
    let p = t_hat.len() as f64;
    let mut abs: Vec<f64> = t_hat.iter().map(|t| t.abs()).collect();
    abs.sort_by(f64::total_cmp);
    (30..=90)
        .map(|k| {
            let cut = normal_upper_quantile(k as f64 / 200.0).expect("k/200 lies in (0, 1)");
            let count = abs.len() - abs.partition_point(|&v| v < cut);
            let r = count as f64 / (k as f64 * p / 100.0) - 1.0;
            r * r
        })
        .sum()
}

/// Chooses δ by calibrating the statistic vector against the normal tail.
///
/// `scales[i]` is `√(Σ̂ᴰᵢᵢ log p / n)`. `evaluate(δ, μ)` returns the transformed
/// statistics at penalties `μ`; it is called once per δ, from δ = 100 down to
/// 1 so that warm-started fits move from sparse to dense. Ties go to the
/// smallest δ.
pub fn select_delta<F>(scales: &[f64], mut evaluate: F) -> Result<DeltaSelection>
where
    F: FnMut(u32, &[f64]) -> Result<Vec<f64>>,
{
    if scales.is_empty() {
        return Err(Error::InvalidArgument("no coordinates to calibrate".into()));
    }
    let mut objective = vec![0.0; DELTA_GRID as usize];
    for delta in (1..=DELTA_GRID).rev() {
        let mu = mu_for(delta, scales);
        let t_hat = evaluate(delta, &mu)?;
        if t_hat.len() != scales.len() {
            return Err(Error::DimensionMismatch(format!("evaluator returned {} statistics for {} coordinates", t_hat.len(), scales.len())));
        }
        objective[(delta - 1) as usize] = delta_objective(&t_hat);
    }
    let mut best = 0;
    for (k, value) in objective.iter().enumerate() {
        if *value < objective[best] {
            best = k;
        }
    }
    let delta_hat = best as u32 + 1;
    Ok(DeltaSelection { delta_hat, mu: mu_for(delta_hat, scales), objective })
}
