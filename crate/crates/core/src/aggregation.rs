//! Vote aggregation: majority voting, confidence-weighted majority voting
//! (CWMV) and the adapted CWMV with an equality exponent and a
//! group-confidence scaling, plus the half/full confidence scale transforms.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Clamp used by [`WeightMode::Soft`].
pub const SOFT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregationError {
    #[error("confidence {0} has no finite log-odds weight")]
    DegenerateConfidence(f64),
    #[error("confidence {0} is outside the valid range")]
    InvalidConfidence(f64),
    #[error("aggregated evidence is exactly balanced")]
    Tie,
    #[error("certainty conventions discarded every voter")]
    Unresolvable,
    #[error("no responses to aggregate")]
    Empty,
    #[error("invalid aggregation parameter: {0}")]
    InvalidParams(String),
}

/// A binary vote. `Positive` is `+1`, `Negative` is `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Decision {
    Positive,
    Negative,
}

impl Decision {
    pub fn value(self) -> i8 {
        match self {
            Decision::Positive => 1,
            Decision::Negative => -1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }

    pub fn from_sign(x: f64) -> Option<Decision> {
        if x > 0.0 {
            Some(Decision::Positive)
        } else if x < 0.0 {
            Some(Decision::Negative)
        } else {
            None
        }
    }
}

impl std::ops::Neg for Decision {
    type Output = Decision;

    fn neg(self) -> Decision {
        match self {
            Decision::Positive => Decision::Negative,
            Decision::Negative => Decision::Positive,
        }
    }
}

impl From<Decision> for i8 {
    fn from(d: Decision) -> i8 {
        d.value()
    }
}

impl TryFrom<i8> for Decision {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Decision::Positive),
            -1 => Ok(Decision::Negative),
            other => Err(format!("decision must be +1 or -1, got {other}")),
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Positive => f.write_str("+1"),
            Decision::Negative => f.write_str("-1"),
        }
    }
}

/// Human-readable names for the two decision values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLabels {
    pub positive: String,
    pub negative: String,
}

impl DecisionLabels {
    pub fn new(positive: impl Into<String>, negative: impl Into<String>) -> Self {
        Self { positive: positive.into(), negative: negative.into() }
    }

    /// `+1` = biased coin, `-1` = fair coin.
    pub fn coin() -> Self {
        Self::new("biased", "fair")
    }

    pub fn label(&self, d: Decision) -> &str {
        match d {
            Decision::Positive => &self.positive,
            Decision::Negative => &self.negative,
        }
    }

    pub fn parse(&self, s: &str) -> Option<Decision> {
        if s == self.positive {
            Some(Decision::Positive)
        } else if s == self.negative {
            Some(Decision::Negative)
        } else {
            None
        }
    }
}

/// Probability that a decision is correct.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub fn new(p: f64) -> Result<Self, AggregationError> {
        if (0.0..=1.0).contains(&p) {
            Ok(Confidence(p))
        } else {
            Err(AggregationError::InvalidConfidence(p))
        }
    }

    /// A confidence on the half scale, `[0.5, 1]`.
    pub fn half(p: f64) -> Result<Self, AggregationError> {
        if (0.5..=1.0).contains(&p) {
            Ok(Confidence(p))
        } else {
            Err(AggregationError::InvalidConfidence(p))
        }
    }

    pub fn p(self) -> f64 {
        self.0
    }

    pub fn is_certain(self) -> bool {
        self.0 == 0.0 || self.0 == 1.0
    }

    pub fn odds(self) -> Result<f64, AggregationError> {
        if self.is_certain() {
            return Err(AggregationError::DegenerateConfidence(self.0));
        }
        Ok(self.0 / (1.0 - self.0))
    }

    pub fn weight(self) -> Result<f64, AggregationError> {
        to_weight(self)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

impl TryFrom<f64> for Confidence {
    type Error = AggregationError;

    fn try_from(p: f64) -> Result<Self, Self::Error> {
        Confidence::new(p)
    }
}

/// A decision with a half-scale confidence toward it.
///
/// Used for individual votes, group votes and ideal-observer responses alike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub decision: Decision,
    pub confidence: Confidence,
}

pub type IndividualResponse = Response;
pub type GroupResponse = Response;

impl Response {
    pub fn new(decision: Decision, p: f64) -> Result<Self, AggregationError> {
        Ok(Self { decision, confidence: Confidence::half(p)? })
    }

    pub fn p(&self) -> f64 {
        self.confidence.p()
    }

    /// Confidence toward `truth` on the full `[0, 1]` scale.
    pub fn full_scale(&self, truth: Decision) -> f64 {
        to_full_scale(self, truth)
    }
}

/// Equality exponent `beta` and group-confidence scale `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptedParams {
    pub beta: f64,
    pub gamma: f64,
}

impl AdaptedParams {
    pub const NAIVE: AdaptedParams = AdaptedParams { beta: 1.0, gamma: 1.0 };

    pub fn new(beta: f64, gamma: f64) -> Result<Self, AggregationError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(AggregationError::InvalidParams(format!("beta must be >= 0, got {beta}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(AggregationError::InvalidParams(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(Self { beta, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightMode {
    /// Certain confidences are an error.
    #[default]
    Strict,
    /// Clamp into `[SOFT_EPSILON, 1 - SOFT_EPSILON]` first.
    Soft,
}

/// Log-odds weight of a confidence.
pub fn to_weight(c: Confidence) -> Result<f64, AggregationError> {
    to_weight_with(c, WeightMode::Strict)
}

pub fn to_weight_with(c: Confidence, mode: WeightMode) -> Result<f64, AggregationError> {
    let p = match mode {
        WeightMode::Strict => {
            if c.is_certain() {
                return Err(AggregationError::DegenerateConfidence(c.p()));
            }
            c.p()
        }
        WeightMode::Soft => c.p().clamp(SOFT_EPSILON, 1.0 - SOFT_EPSILON),
    };
    Ok((p / (1.0 - p)).ln())
}

/// Unweighted majority vote.
pub fn mv(decisions: &[Decision]) -> Result<Decision, AggregationError> {
    if decisions.is_empty() {
        return Err(AggregationError::Empty);
    }
    let sum: i64 = decisions.iter().map(|d| i64::from(d.value())).sum();
    match sum.signum() {
        1 => Ok(Decision::Positive),
        -1 => Ok(Decision::Negative),
        _ => Err(AggregationError::Tie),
    }
}

/// Sums signed terms as (sum of positives) - (sum of magnitudes of negatives),
/// each side accumulated in ascending order. The result does not depend on
/// input order and is exactly negated when every term is negated.
fn balanced_sum(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut pos = 0.0;
    let mut neg = 0.0;
    for &t in terms.iter() {
        if t > 0.0 {
            pos += t;
        } else {
            neg -= t;
        }
    }
    pos - neg
}

/// A vote reduced to its log-odds weight. Certain votes carry an infinite
/// weight toward the side they are certain of.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedVote {
    pub weight: f64,
    pub decision: Decision,
}

impl WeightedVote {
    pub fn from_response(r: &Response) -> Result<Self, AggregationError> {
        if r.p() == 1.0 {
            Ok(Self { weight: f64::INFINITY, decision: r.decision })
        } else if r.p() == 0.0 {
            Ok(Self { weight: f64::INFINITY, decision: -r.decision })
        } else {
            Ok(Self { weight: to_weight(r.confidence)?, decision: r.decision })
        }
    }

    pub fn is_certain(&self) -> bool {
        self.weight.is_infinite()
    }
}

/// Signed aggregate evidence `sum_i w_i^beta y_i`.
///
/// Members with confidence 1 are certain: unmatched certain votes make the
/// result `±inf`; opposing certain pairs are discarded and the rest decide.
/// With `beta == 0` every weight is 1 (certain or not), which is majority
/// voting.
pub fn group_evidence(responses: &[Response], beta: f64) -> Result<f64, AggregationError> {
    let votes =
        responses.iter().map(WeightedVote::from_response).collect::<Result<SmallVec<[WeightedVote; 8]>, _>>()?;
    evidence_from_votes(&votes, beta)
}

pub fn evidence_from_votes(votes: &[WeightedVote], beta: f64) -> Result<f64, AggregationError> {
    if votes.is_empty() {
        return Err(AggregationError::Empty);
    }
    let mut terms: SmallVec<[f64; 8]> = SmallVec::with_capacity(votes.len());
    if beta == 0.0 {
        terms.extend(votes.iter().map(|v| v.decision.as_f64()));
        return Ok(balanced_sum(&mut terms));
    }

    let mut certain = 0i64;
    let mut n_certain = 0usize;
    for v in votes.iter().filter(|v| v.is_certain()) {
        certain += i64::from(v.decision.value());
        n_certain += 1;
    }
    if certain > 0 {
        return Ok(f64::INFINITY);
    }
    if certain < 0 {
        return Ok(f64::NEG_INFINITY);
    }
    if n_certain == votes.len() {
        return Err(AggregationError::Unresolvable);
    }

    for v in votes.iter().filter(|v| !v.is_certain()) {
        let w = v.weight;
        let w = if w == 0.0 { 0.0 } else { w.abs().powf(beta).copysign(w) };
        terms.push(w * v.decision.as_f64());
    }
    Ok(balanced_sum(&mut terms))
}

/// Group confidence `1 / (1 + exp(-gamma |evidence|))`.
///
/// `gamma == 0` always gives 0.5, including for infinite evidence.
pub fn confidence_from_evidence(evidence: f64, gamma: f64) -> f64 {
    1.0 / (1.0 + scaled_neg_exp(gamma, evidence.abs()))
}

/// `exp(-gamma * magnitude)` with `0 * inf` taken as 0.
#[inline]
pub(crate) fn scaled_neg_exp(gamma: f64, magnitude: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        (-gamma * magnitude).exp()
    }
}

/// Naive CWMV: log-odds weighted vote and logistic group confidence.
pub fn cwmv(responses: &[Response]) -> Result<GroupResponse, AggregationError> {
    let evidence = group_evidence(responses, 1.0)?;
    let decision = Decision::from_sign(evidence).ok_or(AggregationError::Tie)?;
    let p = 1.0 / (1.0 + (-evidence.abs()).exp());
    Ok(Response { decision, confidence: Confidence(p) })
}

/// CWMV with weights raised to `beta` and the group log-odds scaled by `gamma`.
pub fn cwmv_adapted(responses: &[Response], params: AdaptedParams) -> Result<GroupResponse, AggregationError> {
    let evidence = group_evidence(responses, params.beta)?;
    let decision = Decision::from_sign(evidence).ok_or(AggregationError::Tie)?;
    let p = confidence_from_evidence(evidence, params.gamma);
    Ok(Response { decision, confidence: Confidence(p) })
}

/// Half-scale response mapped to a confidence toward `truth` in `[0, 1]`.
pub fn to_full_scale(r: &Response, truth: Decision) -> f64 {
    if r.decision == truth {
        r.p()
    } else {
        1.0 - r.p()
    }
}

/// Inverse of [`to_full_scale`]; 0.5 maps to `truth`.
pub fn from_full_scale(v: f64, truth: Decision) -> Result<Response, AggregationError> {
    let v = Confidence::new(v)?.p();
    if v >= 0.5 {
        Ok(Response { decision: truth, confidence: Confidence(v) })
    } else {
        Ok(Response { decision: -truth, confidence: Confidence(1.0 - v) })
    }
}
