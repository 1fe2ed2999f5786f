//! Gaussian likelihood of reported group confidences under adapted CWMV.

use smallvec::SmallVec;

use crate::aggregation::{
    confidence_from_evidence, evidence_from_votes, group_evidence, scaled_neg_exp, to_full_scale, Decision,
    WeightedVote,
};
use crate::simulate::{ModelParams, TrialRecord};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of `N(mean, sd^2)` at `x`; `sd == 0` is `+inf` when
/// `x == mean` and `-inf` otherwise.
pub fn normal_log_density(x: f64, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return if x == mean { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let z = (x - mean) / sd;
    -sd.ln() - LN_SQRT_2PI - 0.5 * z * z
}

/// Predicted full-scale group confidence toward the truth.
///
/// Balanced or unresolvable evidence predicts 0.5.
pub fn predicted_full_scale(trial: &TrialRecord, beta: f64, gamma: f64) -> f64 {
    match group_evidence(&trial.members, beta) {
        Ok(e) => match Decision::from_sign(e) {
            Some(d) => {
                let p = confidence_from_evidence(e, gamma);
                if d == trial.truth {
                    p
                } else {
                    1.0 - p
                }
            }
            None => 0.5,
        },
        Err(_) => 0.5,
    }
}

pub fn observed_full_scale(trial: &TrialRecord) -> f64 {
    to_full_scale(&trial.group, trial.truth)
}

/// Log likelihood of one trial's reported group confidence.
pub fn trial_log_likelihood(trial: &TrialRecord, params: &ModelParams) -> f64 {
    let pred = predicted_full_scale(trial, params.beta, params.gamma);
    normal_log_density(observed_full_scale(trial), pred, params.sigma_g)
}

/// Summed Gaussian log likelihood given the residual sum of squares.
pub fn log_likelihood_from_sse(sse: f64, n: usize, sigma_g: f64) -> f64 {
    if sigma_g == 0.0 {
        return if sse == 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let n = n as f64;
    -n * (sigma_g.ln() + LN_SQRT_2PI) - sse / (2.0 * sigma_g * sigma_g)
}

/// A trial reduced to what the likelihood needs.
#[derive(Debug, Clone)]
pub(crate) struct PreparedTrial {
    votes: SmallVec<[WeightedVote; 4]>,
    truth: Decision,
    observed: f64,
}

impl PreparedTrial {
    pub(crate) fn new(trial: &TrialRecord) -> Self {
        let votes = trial
            .members
            .iter()
            .map(|r| WeightedVote::from_response(r).expect("half-scale responses have weights"))
            .collect();
        Self { votes, truth: trial.truth, observed: observed_full_scale(trial) }
    }

    /// `|evidence|` and whether the predicted decision is the truth.
    #[inline]
    pub(crate) fn evidence(&self, beta: f64) -> (f64, bool) {
        match evidence_from_votes(&self.votes, beta) {
            Ok(e) if e != 0.0 => (e.abs(), (e > 0.0) == (self.truth == Decision::Positive)),
            _ => (0.0, true),
        }
    }
}

/// Residual sum of squares, summed in trial order.
pub(crate) fn sse(trials: &[PreparedTrial], beta: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for t in trials {
        let (a, agrees) = t.evidence(beta);
        let p = 1.0 / (1.0 + scaled_neg_exp(gamma, a));
        let pred = if agrees { p } else { 1.0 - p };
        let r = t.observed - pred;
        total += r * r;
    }
    total
}

/// Residual sums of squares for one `beta` over an evenly spaced run of
/// gamma values. Exponentials are advanced multiplicatively, so values can
/// differ from [`sse`] in the last few bits.
pub(crate) fn sse_profile(trials: &[PreparedTrial], beta: f64, gamma0: f64, step: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for t in trials {
        let (a, agrees) = t.evidence(beta);
        let (off, sign) = if agrees { (0.0, 1.0) } else { (1.0, -1.0) };
        let o = t.observed - off;
        let mut e = scaled_neg_exp(gamma0, a);
        let q = scaled_neg_exp(step, a);
        for acc in out.iter_mut() {
            let r = o - sign / (1.0 + e);
            *acc += r * r;
            e *= q;
        }
    }
}

/// Summed log likelihood of all trials, evaluated through the residual sum
/// of squares. Deterministic: the grid search stores exactly this value.
pub fn log_likelihood(trials: &[TrialRecord], params: &ModelParams) -> f64 {
    let prepared: Vec<PreparedTrial> = trials.iter().map(PreparedTrial::new).collect();
    log_likelihood_from_sse(sse(&prepared, params.beta, params.gamma), trials.len(), params.sigma_g)
}
