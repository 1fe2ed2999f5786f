//! Grid-search maximum likelihood for the group parameters, estimation of
//! individual noise, model comparison, randomization tests and parameter
//! recovery.

mod compare;
mod grid;
mod likelihood;
mod randomization;
mod recovery;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compare::{
    bayes_factor_from_bic, compare_variants, likelihood_ratio_test, BayesFactor, LikelihoodRatio, VariantComparison,
    VariantTotals,
};
pub use grid::{GridAxis, GridSpec, ModelVariant};
pub use likelihood::{
    log_likelihood, log_likelihood_from_sse, normal_log_density, observed_full_scale, predicted_full_scale,
    trial_log_likelihood,
};
pub use randomization::{
    mean_group_beta, permute_confidences, randomization_test, randomization_test_with, PermutationScope,
    RandomizationReport,
};
pub use recovery::{parameter_recovery, ParameterSummary, Pooling, RecoveryReplicate, RecoveryReport};

use crate::serde_util::non_finite;
use crate::simulate::{Dataset, ModelParams, SimError, TrialRecord};
use likelihood::{sse, sse_profile, PreparedTrial};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("grid has no points")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("no trials to fit")]
    EmptyTrials,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

/// Relative slack within which fast-path grid points are re-scored exactly.
const RESCORE_SLACK: f64 = 1e-7;

/// Best grid point for one model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: ModelVariant,
    /// `sigma_i` is estimated from the fitted trials (NaN when not estimable).
    pub params: ModelParams,
    #[serde(with = "non_finite")]
    pub log_likelihood: f64,
    #[serde(with = "non_finite")]
    pub bic: f64,
    #[serde(with = "non_finite")]
    pub aic: f64,
    pub n_trials: usize,
    pub n_params: usize,
    pub grid: GridSpec,
}

pub fn bic(log_likelihood: f64, n_params: usize, n_trials: usize) -> f64 {
    n_params as f64 * (n_trials as f64).ln() - 2.0 * log_likelihood
}

pub fn aic(log_likelihood: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * log_likelihood
}

/// Square root of the mean, over individuals, of the sample variance
/// (n - 1) of each individual's full-scale confidence errors.
///
/// Individuals are identified by `(group_id, member index)`.
pub fn estimate_sigma_i(trials: &[TrialRecord]) -> Result<f64, FitError> {
    let mut errors: BTreeMap<(u32, usize), Vec<f64>> = BTreeMap::new();
    for t in trials {
        for (m, (reported, ideal)) in t.members.iter().zip(&t.ideal_members).enumerate() {
            let err = reported.full_scale(t.truth) - ideal.full_scale(t.truth);
            errors.entry((t.group_id, m)).or_default().push(err);
        }
    }
    if errors.is_empty() {
        return Err(FitError::InsufficientData("no individual responses".into()));
    }
    let mut total = 0.0;
    for ((g, m), errs) in &errors {
        if errs.len() < 2 {
            return Err(FitError::InsufficientData(format!(
                "group {g} member {m} has {} trial(s), need 2",
                errs.len()
            )));
        }
        total += crate::stats::sample_variance(errs);
    }
    Ok((total / errors.len() as f64).sqrt())
}

/// Exhaustive grid search for the maximum-likelihood group parameters.
///
/// Ties go to the lexicographically smallest `(beta, gamma, sigma_g)`.
pub fn grid_fit(trials: &[TrialRecord], variant: ModelVariant, grid: &GridSpec) -> Result<FitResult, FitError> {
    if trials.is_empty() {
        return Err(FitError::EmptyTrials);
    }
    grid.validate()?;
    let betas = variant.beta_axis(grid);
    let gammas = variant.gamma_axis(grid);
    let sigmas = grid.sigma_g.values();
    if betas.is_empty() || gammas.is_empty() || sigmas.is_empty() {
        return Err(FitError::EmptyGrid);
    }

    let prepared: Vec<PreparedTrial> = trials.iter().map(PreparedTrial::new).collect();
    let (beta, gamma, sse_best) = best_beta_gamma(&prepared, &betas, &gammas);

    let n = trials.len();
    let mut best_sigma = sigmas[0];
    let mut best_ll = log_likelihood_from_sse(sse_best, n, best_sigma);
    for &s in &sigmas[1..] {
        let ll = log_likelihood_from_sse(sse_best, n, s);
        if ll > best_ll {
            best_ll = ll;
            best_sigma = s;
        }
    }

    let sigma_i = estimate_sigma_i(trials).unwrap_or(f64::NAN);
    let k = variant.n_free();
    Ok(FitResult {
        variant,
        params: ModelParams { sigma_i, beta, gamma, sigma_g: best_sigma },
        log_likelihood: best_ll,
        bic: bic(best_ll, k, n),
        aic: aic(best_ll, k),
        n_trials: n,
        n_params: k,
        grid: *grid,
    })
}

/// Minimum residual sum of squares over the (beta, gamma) grid.
///
/// The best sigma_g does not depend on (beta, gamma), so maximizing the
/// likelihood reduces to minimizing the residuals. A multiplicative fast
/// path scans the grid; points within `RESCORE_SLACK` of its minimum are
/// re-scored exactly, in lexicographic order.
fn best_beta_gamma(trials: &[PreparedTrial], betas: &GridAxis, gammas: &GridAxis) -> (f64, f64, f64) {
    let nb = betas.len();
    let ng = gammas.len();
    let mut table = vec![0.0; nb * ng];
    for (bi, row) in table.chunks_mut(ng).enumerate() {
        sse_profile(trials, betas.value(bi), gammas.value(0), gammas.step, row);
    }
    let fast_min = table.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = fast_min * (1.0 + RESCORE_SLACK) + 1e-12;

    let mut best: Option<(f64, f64, f64)> = None;
    for (idx, &v) in table.iter().enumerate() {
        if v > cutoff {
            continue;
        }
        let (b, g) = (betas.value(idx / ng), gammas.value(idx % ng));
        let exact = sse(trials, b, g);
        if best.is_none_or(|(_, _, s)| exact < s) {
            best = Some((b, g, exact));
        }
    }
    best.expect("grid is nonempty")
}

/// One group's fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub group_id: u32,
    pub fit: FitResult,
}

/// Per-group fits of one variant with summed scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFitSet {
    pub variant: ModelVariant,
    pub groups: Vec<GroupFit>,
    #[serde(with = "non_finite")]
    pub total_log_likelihood: f64,
    #[serde(with = "non_finite")]
    pub total_bic: f64,
    #[serde(with = "non_finite")]
    pub total_aic: f64,
}

impl GroupFitSet {
    pub fn from_fits(variant: ModelVariant, groups: Vec<GroupFit>) -> Self {
        Self {
            variant,
            total_log_likelihood: groups.iter().map(|g| g.fit.log_likelihood).sum(),
            total_bic: groups.iter().map(|g| g.fit.bic).sum(),
            total_aic: groups.iter().map(|g| g.fit.aic).sum(),
            groups,
        }
    }

    pub fn values(&self, f: impl Fn(&ModelParams) -> f64) -> Vec<f64> {
        self.groups.iter().map(|g| f(&g.fit.params)).collect()
    }
}

/// Fits every group independently (in parallel, merged by group id).
pub fn fit_by_group(dataset: &Dataset, variant: ModelVariant, grid: &GridSpec) -> Result<GroupFitSet, FitError> {
    if dataset.is_empty() {
        return Err(FitError::EmptyTrials);
    }
    let groups = dataset
        .by_group()
        .into_par_iter()
        .map(|(group_id, trials)| grid_fit(&trials, variant, grid).map(|fit| GroupFit { group_id, fit }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroupFitSet::from_fits(variant, groups))
}
