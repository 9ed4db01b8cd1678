//! Campaign configuration: flat `key = value` lines, `#` comments, and one
//! `[scenario]` section per simulated design.
//!
//! ```text
//! seed = 20240101
//! methods = iv, naive
//! output = results
//!
//! [scenario]
//! name = base
//! n = 200
//! p = 100
//! q = 100
//! replications = 200
//! alpha = 0.05, 0.1, 0.2
//! k = 2, 3, 4
//! ```
//!
//! Unset scenario keys take the simulation defaults: `s1 = s2 = 10`,
//! `gamma = 0.75, 1.0`, `beta = 0.1, 0.3` (symmetric), `confounded = 10`,
//! `confound_value = 0.3`, scaled-Lasso tuning with the quantile penalty.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hdiv::simgen::{BetaInterval, SimConfig};
use hdiv::solver::ScaledPenalty;

use crate::error::{CliError, CliResult};

pub const DEFAULT_ALPHAS: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_KS: [f64; 3] = [2.0, 3.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Two-stage fit on instrument-predicted covariates.
    Iv,
    /// Single-stage fit on the raw covariates.
    Naive,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Iv => "iv",
            Method::Naive => "naive",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "iv" => Ok(Method::Iv),
            "naive" => Ok(Method::Naive),
            other => Err(format!("unknown method {other:?} (expected iv or naive)")),
        }
    }
}

/// Penalty rule for one regression stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageTuning {
    Scaled(ScaledPenalty),
    /// K-fold CV over a 50-point log grid down to 1% of λ_max.
    CrossValidation { folds: usize },
}

impl Default for StageTuning {
    fn default() -> Self {
        StageTuning::Scaled(ScaledPenalty::default())
    }
}

impl StageTuning {
    pub fn as_str(&self) -> String {
        match self {
            StageTuning::Scaled(p) => p.as_str().to_string(),
            StageTuning::CrossValidation { folds } => format!("cv{folds}"),
        }
    }
}

impl FromStr for StageTuning {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quantile" => Ok(StageTuning::Scaled(ScaledPenalty::Quantile)),
            "universal" => Ok(StageTuning::Scaled(ScaledPenalty::Universal)),
            "cv" => Ok(StageTuning::CrossValidation { folds: 5 }),
            _ => match s.strip_prefix("cv").map(str::parse::<usize>) {
                Some(Ok(folds)) if folds >= 2 => Ok(StageTuning::CrossValidation { folds }),
                _ => Err(format!("unknown tuning {s:?} (expected quantile, universal, cv or cvK)")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Template; its seed is replaced for every replication.
    pub sim: SimConfig,
    pub replications: usize,
    pub alphas: Vec<f64>,
    pub ks: Vec<f64>,
    /// Draw Γ₀, β₀ and Σ_e once per scenario instead of once per replication.
    pub fixed_parameters: bool,
    pub first_stage: StageTuning,
    pub second_stage: StageTuning,
}

impl Scenario {
    pub fn new(name: impl Into<String>, n: usize, p: usize, q: usize, replications: usize) -> Self {
        Scenario {
            name: name.into(),
            sim: SimConfig::new(n, p, q, 0),
            replications,
            alphas: DEFAULT_ALPHAS.to_vec(),
            ks: DEFAULT_KS.to_vec(),
            fixed_parameters: false,
            first_stage: StageTuning::default(),
            second_stage: StageTuning::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.replications == 0 {
            return Err("replications must be at least 1".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(format!("alpha {a} outside (0, 1)"));
        }
        let p = self.sim.p as f64;
        if let Some(k) = self.ks.iter().find(|k| !(**k > 0.0 && **k < p)) {
            return Err(format!("k {k} outside (0, p = {p})"));
        }
        self.sim.validate().map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub scenarios: Vec<Scenario>,
}

impl CampaignConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        parse_config(&text, path)
    }
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| format!("bad list entry {:?}: {e}", v.trim())))
        .collect()
}

fn pair(value: &str) -> Result<(f64, f64), String> {
    match list::<f64>(value)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(format!("expected two numbers, found {}", other.len())),
    }
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse {value:?}: {e}"))
}

const SCENARIO_KEYS: [&str; 13] = [
    "replications",
    "s1",
    "s2",
    "alpha",
    "k",
    "gamma",
    "beta",
    "beta_interval",
    "confounded",
    "confound_value",
    "fixed_parameters",
    "first_stage",
    "second_stage",
];

struct PendingScenario {
    line: usize,
    name: Option<String>,
    dims: [Option<usize>; 3],
    keys: Vec<(usize, String, String)>,
}

pub fn parse_config(text: &str, path: &Path) -> CliResult<CampaignConfig> {
    let err = |line: usize, field: Option<&str>, message: String| CliError::Config {
        path: PathBuf::from(path),
        line,
        field: field.map(str::to_string),
        message,
    };

    let mut seed = None;
    let mut methods = None;
    let mut workers = None;
    let mut output = None;
    let mut pending: Vec<PendingScenario> = Vec::new();
    let mut seen_global = HashSet::new();

    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content.starts_with('[') {
            if content != "[scenario]" {
                return Err(err(line, None, format!("unknown section {content}")));
            }
            pending.push(PendingScenario { line, name: None, dims: [None; 3], keys: Vec::new() });
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(line, None, format!("expected key = value, found {content:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(line, Some(key), "empty value".into()));
        }
        match pending.last_mut() {
            None => {
                if !seen_global.insert(key.to_string()) {
                    return Err(err(line, Some(key), "duplicate key".into()));
                }
                let wrap = |r: Result<(), String>| r.map_err(|m| err(line, Some(key), m));
                match key {
                    "seed" => wrap(scalar(value).map(|v| seed = Some(v)))?,
                    "methods" => wrap(list::<Method>(value).map(|v| methods = Some(v)))?,
                    "workers" => wrap(scalar::<usize>(value).and_then(|v| {
                        if v == 0 {
                            Err("workers must be at least 1".into())
                        } else {
                            workers = Some(v);
                            Ok(())
                        }
                    }))?,
                    "output" => output = Some(PathBuf::from(value)),
                    _ => return Err(err(line, Some(key), "unknown global key".into())),
                }
            }
            Some(section) => {
                if section.keys.iter().any(|(_, k, _)| k == key) || (key == "name" && section.name.is_some()) {
                    return Err(err(line, Some(key), "duplicate key".into()));
                }
                let slot = match key {
                    "name" => {
                        section.name = Some(value.to_string());
                        continue;
                    }
                    "n" => Some(0),
                    "p" => Some(1),
                    "q" => Some(2),
                    _ => None,
                };
                match slot {
                    Some(i) => {
                        let v = scalar::<usize>(value).map_err(|m| err(line, Some(key), m))?;
                        if section.dims[i].replace(v).is_some() {
                            return Err(err(line, Some(key), "duplicate key".into()));
                        }
                    }
                    None if SCENARIO_KEYS.contains(&key) => section.keys.push((line, key.to_string(), value.to_string())),
                    None => return Err(err(line, Some(key), "unknown scenario key".into())),
                }
            }
        }
    }

    let mut scenarios = Vec::with_capacity(pending.len());
    for (index, section) in pending.into_iter().enumerate() {
        let [Some(n), Some(p), Some(q)] = section.dims else {
            return Err(err(section.line, None, "scenario needs n, p and q".into()));
        };
        let name = section.name.unwrap_or_else(|| format!("scenario{}", index + 1));
        let mut sc = Scenario::new(name, n, p, q, 100);
        for (line, key, value) in &section.keys {
            let key = key.as_str();
            let value = value.as_str();
            let apply = |sc: &mut Scenario| -> Result<(), String> {
                match key {
                    "replications" => sc.replications = scalar(value)?,
                    "s1" => sc.sim.s1 = scalar(value)?,
                    "s2" => sc.sim.s2 = scalar(value)?,
                    "alpha" => sc.alphas = list(value)?,
                    "k" => sc.ks = list(value)?,
                    "gamma" => sc.sim.gamma_bounds = pair(value)?,
                    "beta" => {
                        let (lo, hi) = pair(value)?;
                        sc.sim.beta_interval = match sc.sim.beta_interval {
                            BetaInterval::Symmetric { .. } => BetaInterval::Symmetric { lo, hi },
                            BetaInterval::Plain { .. } => BetaInterval::Plain { lo, hi },
                        };
                    }
                    "beta_interval" => {
                        let (lo, hi) = match sc.sim.beta_interval {
                            BetaInterval::Symmetric { lo, hi } | BetaInterval::Plain { lo, hi } => (lo, hi),
                        };
                        sc.sim.beta_interval = match value {
                            "symmetric" => BetaInterval::Symmetric { lo, hi },
                            "plain" => BetaInterval::Plain { lo, hi },
                            other => return Err(format!("unknown interval {other:?} (expected symmetric or plain)")),
                        };
                    }
                    "confounded" => sc.sim.confound_count = scalar(value)?,
                    "confound_value" => sc.sim.confound_value = scalar(value)?,
                    "fixed_parameters" => sc.fixed_parameters = scalar(value)?,
                    "first_stage" => sc.first_stage = value.parse()?,
                    "second_stage" => sc.second_stage = value.parse()?,
                    _ => unreachable!("keys are checked while parsing"),
                }
                Ok(())
            };
            apply(&mut sc).map_err(|m| err(*line, Some(key), m))?;
        }
        // "beta_interval" may precede "beta"; both orders give the same result
        // because each keeps the other's setting.
        sc.validate().map_err(|m| err(section.line, None, format!("scenario {}: {m}", sc.name)))?;
        scenarios.push(sc);
    }
    if scenarios.is_empty() {
        return Err(err(text.lines().count().max(1), None, "no [scenario] sections".into()));
    }
    let mut methods = methods.unwrap_or_else(|| vec![Method::Iv, Method::Naive]);
    methods.sort();
    methods.dedup();
    Ok(CampaignConfig { seed: seed.unwrap_or(0), methods, workers, output, scenarios })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<CampaignConfig> {
        parse_config(text, Path::new("c.conf"))
    }

    fn position(e: CliError) -> (usize, Option<String>) {
        match e {
            CliError::Config { line, field, .. } => (line, field),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn minimal_scenario_uses_defaults() {
        let c = parse("[scenario]\nn = 50\np = 20\nq = 30\n").unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.methods, vec![Method::Iv, Method::Naive]);
        let s = &c.scenarios[0];
        assert_eq!(s.name, "scenario1");
        assert_eq!((s.sim.n, s.sim.p, s.sim.q, s.sim.s1, s.sim.s2), (50, 20, 30, 10, 10));
        assert_eq!(s.alphas, DEFAULT_ALPHAS);
        assert_eq!(s.ks, DEFAULT_KS);
        assert_eq!(s.replications, 100);
    }

    #[test]
    fn full_config() {
        let text = "# campaign\nseed = 7\nmethods = naive\nworkers = 3\noutput = out/a\n\n[scenario]\nname = a\nn=200\np=100\nq=100\nreplications = 5 # few\n\
                    alpha = 0.1\nk = 2, 5\ngamma = 0.5, 0.9\nbeta_interval = plain\nbeta = -0.3, 0.3\nconfounded = 0\nfixed_parameters = true\n\
                    first_stage = cv10\nsecond_stage = universal\n[scenario]\nn=10\np=5\nq=5\ns1=1\ns2=1\nconfounded=1\nk=1\n";
        let c = parse(text).unwrap();
        assert_eq!((c.seed, c.workers), (7, Some(3)));
        assert_eq!(c.output, Some(PathBuf::from("out/a")));
        assert_eq!(c.methods, vec![Method::Naive]);
        let a = &c.scenarios[0];
        assert_eq!(a.replications, 5);
        assert_eq!(a.ks, vec![2.0, 5.0]);
        assert_eq!(a.sim.gamma_bounds, (0.5, 0.9));
        assert_eq!(a.sim.beta_interval, BetaInterval::Plain { lo: -0.3, hi: 0.3 });
        assert!(a.fixed_parameters);
        assert_eq!(a.first_stage, StageTuning::CrossValidation { folds: 10 });
        assert_eq!(a.second_stage, StageTuning::Scaled(ScaledPenalty::Universal));
        assert_eq!(c.scenarios[1].name, "scenario2");
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        assert_eq!(position(parse("seed = x\n").unwrap_err()), (1, Some("seed".into())));
        assert_eq!(position(parse("[scenario]\nn=1\np=2\nq=3\nbogus = 1\n").unwrap_err()), (5, Some("bogus".into())));
        assert_eq!(position(parse("[scenario]\nn=10\n\np=5\nq=5\nalpha = 0.1, 1.5\n").unwrap_err()).0, 1);
        assert_eq!(position(parse("[scenario]\nn=10\nn=11\n").unwrap_err()), (3, Some("n".into())));
        assert_eq!(position(parse("[scenario]\nn 10\n").unwrap_err()), (2, None));
        assert_eq!(position(parse("[other]\n").unwrap_err()), (1, None));
        assert_eq!(position(parse("methods = iv, lasso\n[scenario]\nn=1\np=1\nq=1").unwrap_err()), (1, Some("methods".into())));
        assert!(parse("seed = 1\n").is_err());
        assert!(parse("[scenario]\nn=10\np=5\n").is_err());
    }

    #[test]
    fn replication_and_level_bounds() {
        assert!(parse("[scenario]\nn=20\np=10\nq=10\nreplications=0\n").is_err());
        assert!(parse("[scenario]\nn=20\np=10\nq=10\nk=10\n").is_err());
        assert!(parse("[scenario]\nn=20\np=10\nq=10\nalpha=0\n").is_err());
        assert!(parse("[scenario]\nn=20\np=10\nq=10\nk=9.5\n").is_ok());
    }

    #[test]
    fn tuning_names() {
        assert_eq!("cv".parse::<StageTuning>().unwrap(), StageTuning::CrossValidation { folds: 5 });
        assert!("cv1".parse::<StageTuning>().is_err());
        assert!("lasso".parse::<StageTuning>().is_err());
        assert_eq!(StageTuning::CrossValidation { folds: 10 }.as_str(), "cv10");
    }
}
