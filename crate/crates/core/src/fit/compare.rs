use log::warn;
use serde::{Deserialize, Serialize};

use super::{GroupFitSet, ModelVariant};
use crate::serde_util::non_finite;
use crate::stats::special::chi2_sf;

/// Bayes factor of model A over model B from their BIC scores.
pub fn bayes_factor_from_bic(bic_a: f64, bic_b: f64) -> f64 {
    ((bic_b - bic_a) / 2.0).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatio {
    #[serde(with = "non_finite")]
    pub chi2: f64,
    pub df: usize,
    #[serde(with = "non_finite")]
    pub p: f64,
}

/// Likelihood-ratio test of a nested model against the full model.
pub fn likelihood_ratio_test(logl_full: f64, logl_restricted: f64, df: usize) -> LikelihoodRatio {
    if logl_full < logl_restricted {
        warn!("restricted log likelihood {logl_restricted} exceeds full {logl_full}");
    }
    let chi2 = 2.0 * (logl_full - logl_restricted);
    let p = if chi2 <= 0.0 { 1.0 } else { chi2_sf(chi2, df as f64) };
    LikelihoodRatio { chi2, df, p }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTotals {
    pub variant: ModelVariant,
    #[serde(with = "non_finite")]
    pub log_likelihood: f64,
    #[serde(with = "non_finite")]
    pub bic: f64,
    #[serde(with = "non_finite")]
    pub aic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    pub a: ModelVariant,
    pub b: ModelVariant,
    #[serde(with = "non_finite")]
    pub value: f64,
}

/// Summed scores per variant, every pairwise Bayes factor, and the
/// likelihood-ratio test of the full model against `beta = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantComparison {
    pub totals: Vec<VariantTotals>,
    pub bayes_factors: Vec<BayesFactor>,
    pub lrt_full_vs_beta_fixed_1: Option<LikelihoodRatio>,
}

pub fn compare_variants(sets: &[GroupFitSet]) -> VariantComparison {
    let totals: Vec<VariantTotals> = sets
        .iter()
        .map(|s| VariantTotals {
            variant: s.variant,
            log_likelihood: s.total_log_likelihood,
            bic: s.total_bic,
            aic: s.total_aic,
        })
        .collect();
    let mut bayes_factors = Vec::new();
    for a in &totals {
        for b in &totals {
            if a.variant != b.variant {
                bayes_factors.push(BayesFactor {
                    a: a.variant,
                    b: b.variant,
                    value: bayes_factor_from_bic(a.bic, b.bic),
                });
            }
        }
    }
    let find = |v: ModelVariant| sets.iter().find(|s| s.variant == v);
    let lrt = match (find(ModelVariant::Full), find(ModelVariant::BetaFixed1)) {
        (Some(full), Some(restricted)) => {
            let df = full.groups.len() * (ModelVariant::Full.n_free() - ModelVariant::BetaFixed1.n_free());
            Some(likelihood_ratio_test(full.total_log_likelihood, restricted.total_log_likelihood, df))
        }
        _ => None,
    };
    VariantComparison { totals, bayes_factors, lrt_full_vs_beta_fixed_1: lrt }
}
