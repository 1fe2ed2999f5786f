use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{estimate_sigma_i, fit_by_group, grid_fit, FitError, GridSpec, ModelVariant};
use crate::simulate::{derive_seed, run_experiment, ExperimentDesign, ModelParams, TiePolicy};
use crate::stats::{mean, median, sample_sd};

/// How one replicate's datasets are turned into a single estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Fit each group separately and take the median across groups.
    #[default]
    GroupMedian,
    /// Fit all trials of the replicate at once.
    Pooled,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::GroupMedian => "group-median",
            Pooling::Pooled => "pooled",
        })
    }
}

impl FromStr for Pooling {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "group-median" => Ok(Pooling::GroupMedian),
            "pooled" => Ok(Pooling::Pooled),
            other => Err(format!("unknown pooling '{other}' (expected group-median or pooled)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReplicate {
    pub replicate: usize,
    pub seed: u64,
    pub sigma_i: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_g: f64,
}

impl RecoveryReplicate {
    fn get(&self, name: &str) -> f64 {
        match name {
            "sigma_i" => self.sigma_i,
            "beta" => self.beta,
            "gamma" => self.gamma,
            _ => self.sigma_g,
        }
    }
}

/// Estimates of one parameter across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub truth: f64,
    pub median: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    /// Fraction of replicates within one grid step of the truth.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub truth: ModelParams,
    pub n_groups: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub pooling: Pooling,
    pub grid: GridSpec,
    pub replicates: Vec<RecoveryReplicate>,
    pub summaries: Vec<ParameterSummary>,
}

impl RecoveryReport {
    pub fn summary(&self, name: &str) -> Option<&ParameterSummary> {
        self.summaries.iter().find(|s| s.name == name)
    }
}

/// Simulates `n_reps` experiments from `truth` and fits each with the full
/// model. Replicate `r` uses seed `derive_seed(seed, r)`.
#[allow(clippy::too_many_arguments)]
pub fn parameter_recovery(
    truth: &ModelParams,
    design: &ExperimentDesign,
    n_groups: usize,
    n_reps: usize,
    seed: u64,
    grid: &GridSpec,
    pooling: Pooling,
    tie_policy: TiePolicy,
) -> Result<RecoveryReport, FitError> {
    if n_reps == 0 {
        return Err(FitError::InsufficientData("n_reps must be at least 1".into()));
    }
    let mut replicates = Vec::with_capacity(n_reps);
    for r in 0..n_reps {
        let rep_seed = derive_seed(seed, r as u64);
        let data = run_experiment(design, truth, n_groups, rep_seed, tie_policy)?;
        let sigma_i = estimate_sigma_i(&data.trials).unwrap_or(f64::NAN);
        let (beta, gamma, sigma_g) = match pooling {
            Pooling::Pooled => {
                let p = grid_fit(&data.trials, ModelVariant::Full, grid)?.params;
                (p.beta, p.gamma, p.sigma_g)
            }
            Pooling::GroupMedian => {
                let set = fit_by_group(&data, ModelVariant::Full, grid)?;
                (median(&set.values(|p| p.beta)), median(&set.values(|p| p.gamma)), median(&set.values(|p| p.sigma_g)))
            }
        };
        replicates.push(RecoveryReplicate { replicate: r, seed: rep_seed, sigma_i, beta, gamma, sigma_g });
    }

    let params = [
        ("sigma_i", truth.sigma_i, grid.sigma_g.step),
        ("beta", truth.beta, grid.beta.step),
        ("gamma", truth.gamma, grid.gamma.step),
        ("sigma_g", truth.sigma_g, grid.sigma_g.step),
    ];
    let summaries = params
        .iter()
        .map(|&(name, t, step)| {
            let xs: Vec<f64> = replicates.iter().map(|r| r.get(name)).collect();
            let m = mean(&xs);
            ParameterSummary {
                name: name.to_string(),
                truth: t,
                median: median(&xs),
                mean: m,
                bias: m - t,
                sd: if xs.len() > 1 { sample_sd(&xs) } else { 0.0 },
                coverage: xs.iter().filter(|&&x| (x - t).abs() <= step + 1e-9).count() as f64 / xs.len() as f64,
            }
        })
        .collect();
    Ok(RecoveryReport { truth: *truth, n_groups, n_reps, seed, pooling, grid: *grid, replicates, summaries })
}
