//! Quantile–quantile data for chosen coordinates across replications.
//!
//! Parameters are held fixed across replications (the coefficient vector and
//! error covariance are drawn once per scenario), so each coordinate keeps its
//! null/alternative status and its statistic has one sampling distribution.

use std::path::Path;

use hdiv::inference::normal::normal_quantile;

use crate::campaign::run_campaign;
use crate::config::{CampaignConfig, Method};
use crate::csvio::{format_float, write_rows};
use crate::error::{CliError, CliResult};

pub const QQ_HEADER: [&str; 7] = ["scenario", "method", "coordinate", "null", "rank", "t_hat", "normal_quantile"];

/// Sorted sample paired with plotting positions `Φ⁻¹((r − 0.5)/R)`.
pub fn qq_pairs(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, normal_quantile((i as f64 + 0.5) / r).expect("plotting position inside (0, 1)")))
        .collect()
}

/// Least-squares line `empirical ≈ intercept + slope · normal`.
pub fn qq_line(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let sxy: f64 = pairs.iter().map(|p| (p.1 - mx) * (p.0 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.1 - mx) * (p.1 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - slope * mx, slope)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QqSeries {
    pub scenario: String,
    pub coordinate: usize,
    pub null: bool,
    pub pairs: Vec<(f64, f64)>,
}

/// QQ series for each scenario × coordinate (0-based) under one method.
/// Failed replications are skipped and counted against the usual limit.
pub fn qq_series(config: &CampaignConfig, coordinates: &[usize], method: Method, workers: usize) -> CliResult<Vec<QqSeries>> {
    if coordinates.is_empty() {
        return Err(CliError::Usage("no coordinates requested".into()));
    }
    for sc in &config.scenarios {
        if let Some(&bad) = coordinates.iter().find(|&&c| c >= sc.sim.p) {
            return Err(CliError::Usage(format!("coordinate {bad} outside scenario {} (p = {})", sc.name, sc.sim.p)));
        }
    }
    let mut config = config.clone();
    config.methods = vec![method];
    for sc in &mut config.scenarios {
        sc.fixed_parameters = true;
    }
    let result = run_campaign(&config, workers)?;
    result.check_failures()?;

    let mut series = Vec::new();
    for (s, sc) in config.scenarios.iter().enumerate() {
        let reps: Vec<_> = result.replications.iter().filter(|r| r.scenario == s).collect();
        let null = reps.iter().find(|r| !r.null.is_empty()).map(|r| r.null.clone());
        for &c in coordinates {
            let values: Vec<f64> = reps
                .iter()
                .filter_map(|r| r.methods[0].1.as_ref().ok())
                .map(|out| out.t_hat[c])
                .collect();
            series.push(QqSeries {
                scenario: sc.name.clone(),
                coordinate: c,
                null: null.as_ref().is_some_and(|n| n[c]),
                pairs: qq_pairs(&values),
            });
        }
    }
    Ok(series)
}

pub fn cmd_qqdata(config: &CampaignConfig, coordinates: &[usize], method: Method, workers: usize, output: &Path) -> CliResult<Vec<QqSeries>> {
    let series = qq_series(config, coordinates, method, workers)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let header: Vec<String> = QQ_HEADER.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for s in &series {
        for (rank, (value, quantile)) in s.pairs.iter().enumerate() {
            rows.push(vec![
                s.scenario.clone(),
                method.as_str().to_string(),
                s.coordinate.to_string(),
                s.null.to_string(),
                (rank + 1).to_string(),
                format_float(*value),
                format_float(*quantile),
            ]);
        }
    }
    write_rows(output, Some(&header), &rows)?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_value_sits_at_the_median() {
        assert_eq!(qq_pairs(&[1.7]), vec![(1.7, 0.0)]);
    }

    #[test]
    fn pairs_are_sorted_and_symmetric() {
        let pairs = qq_pairs(&[3.0, -1.0, 0.5, 2.0]);
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        assert_eq!(values, vec![-1.0, 0.5, 2.0, 3.0]);
        assert!((pairs[0].1 + pairs[3].1).abs() < 1e-15);
        assert!((pairs[0].1 - normal_quantile(0.125).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn line_through_exact_quantiles() {
        let pairs: Vec<(f64, f64)> = qq_pairs(&[0.0; 5]).iter().map(|&(_, q)| (1.0 + 2.0 * q, q)).collect();
        let (a, b) = qq_line(&pairs);
        assert!((a - 1.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }
}
