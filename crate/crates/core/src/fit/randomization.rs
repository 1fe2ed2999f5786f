use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{grid_fit, FitError, GridSpec, ModelVariant};
use crate::aggregation::Response;
use crate::simulate::{derive_seed, TrialRecord};
use crate::stats::{mean, quantile};

/// Which individual confidences are exchanged with each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PermutationScope {
    /// All individual responses in the dataset.
    #[default]
    Global,
    /// Only responses from the same group.
    WithinGroup,
}

impl fmt::Display for PermutationScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PermutationScope::Global => "global",
            PermutationScope::WithinGroup => "within-group",
        })
    }
}

impl FromStr for PermutationScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(PermutationScope::Global),
            "within-group" => Ok(PermutationScope::WithinGroup),
            other => Err(format!("unknown permutation scope '{other}' (expected global or within-group)")),
        }
    }
}

fn shuffle_slots<R: Rng + ?Sized>(trials: &mut [TrialRecord], slots: &[(usize, usize)], rng: &mut R) {
    let mut ps: Vec<f64> = slots.iter().map(|&(t, m)| trials[t].members[m].p()).collect();
    ps.shuffle(rng);
    for (&(t, m), p) in slots.iter().zip(ps) {
        let d = trials[t].members[m].decision;
        trials[t].members[m] = Response::new(d, p).expect("permuted half-scale confidence");
    }
}

/// Shuffles individual confidences among individual responses, leaving
/// decisions, group responses and ideals in place.
pub fn permute_confidences<R: Rng + ?Sized>(
    trials: &[TrialRecord],
    scope: PermutationScope,
    rng: &mut R,
) -> Vec<TrialRecord> {
    let mut out = trials.to_vec();
    let slots = |pred: &dyn Fn(&TrialRecord) -> bool| -> Vec<(usize, usize)> {
        trials
            .iter()
            .enumerate()
            .filter(|(_, t)| pred(t))
            .flat_map(|(i, t)| (0..t.members.len()).map(move |m| (i, m)))
            .collect()
    };
    match scope {
        PermutationScope::Global => shuffle_slots(&mut out, &slots(&|_| true), rng),
        PermutationScope::WithinGroup => {
            let mut groups: Vec<u32> = trials.iter().map(|t| t.group_id).collect();
            groups.sort_unstable();
            groups.dedup();
            for g in groups {
                shuffle_slots(&mut out, &slots(&|t| t.group_id == g), rng);
            }
        }
    }
    out
}

/// Mean over groups of the full-model beta estimate of each group.
pub fn mean_group_beta(trials: &[TrialRecord], grid: &GridSpec) -> Result<f64, FitError> {
    if trials.is_empty() {
        return Err(FitError::EmptyTrials);
    }
    let mut groups: Vec<u32> = trials.iter().map(|t| t.group_id).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut betas = Vec::with_capacity(groups.len());
    for g in groups {
        let own: Vec<TrialRecord> = trials.iter().filter(|t| t.group_id == g).cloned().collect();
        betas.push(grid_fit(&own, ModelVariant::Full, grid)?.params.beta);
    }
    Ok(mean(&betas))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizationReport {
    pub seed: u64,
    pub scope: PermutationScope,
    pub n_perm: usize,
    /// Statistic on the unpermuted data.
    pub observed_beta: f64,
    pub beta_samples: Vec<f64>,
    pub q95: f64,
}

/// Null distribution of the mean group beta under shuffled confidences.
/// Permutation `k` draws from its own stream derived from `(seed, k)`.
pub fn randomization_test(
    trials: &[TrialRecord],
    n_perm: usize,
    grid: &GridSpec,
    seed: u64,
    scope: PermutationScope,
) -> Result<RandomizationReport, FitError> {
    randomization_test_with(trials, n_perm, grid, seed, scope, |t, rng| permute_confidences(t, scope, rng))
}

/// [`randomization_test`] with a caller-supplied permutation.
pub fn randomization_test_with<F>(
    trials: &[TrialRecord],
    n_perm: usize,
    grid: &GridSpec,
    seed: u64,
    scope: PermutationScope,
    permute: F,
) -> Result<RandomizationReport, FitError>
where
    F: Fn(&[TrialRecord], &mut ChaCha8Rng) -> Vec<TrialRecord> + Sync,
{
    if n_perm == 0 {
        return Err(FitError::InsufficientData("n_perm must be at least 1".into()));
    }
    let observed_beta = mean_group_beta(trials, grid)?;
    let beta_samples = (0..n_perm as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k));
            mean_group_beta(&permute(trials, &mut rng), grid)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let q95 = quantile(&beta_samples, 0.95);
    Ok(RandomizationReport { seed, scope, n_perm, observed_beta, beta_samples, q95 })
}
