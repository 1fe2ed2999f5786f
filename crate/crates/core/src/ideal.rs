//! Bayesian ideal observer for the fair-versus-biased coin task, and the
//! reconstruction of disk sequences that hit target ideal responses.

use std::fmt;
use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{Confidence, Decision, Response};

/// Ideal decision used when the posterior is exactly balanced.
pub const POSTERIOR_TIE_DECISION: Decision = Decision::Negative;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IdealError {
    #[error("no sequence with length in {lengths:?} reaches {target} within {tolerance}")]
    NoSequence { target: String, lengths: (usize, usize), tolerance: f64 },
    #[error("invalid coin model: {0}")]
    InvalidModel(String),
    #[error("invalid disk '{0}', expected R or B")]
    InvalidDisk(String),
    #[error("stimulus sequence must contain at least one disk")]
    EmptySequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Disk {
    #[serde(rename = "R")]
    Red,
    #[serde(rename = "B")]
    Blue,
}

impl Disk {
    pub fn as_char(self) -> char {
        match self {
            Disk::Red => 'R',
            Disk::Blue => 'B',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coin {
    Fair,
    Biased,
}

impl Coin {
    /// `Biased` is the `+1` decision.
    pub fn decision(self) -> Decision {
        match self {
            Coin::Biased => Decision::Positive,
            Coin::Fair => Decision::Negative,
        }
    }

    pub fn from_decision(d: Decision) -> Coin {
        match d {
            Decision::Positive => Coin::Biased,
            Decision::Negative => Coin::Fair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoinModel {
    pub p_red_fair: f64,
    pub p_red_biased: f64,
    pub prior_biased: f64,
}

impl Default for CoinModel {
    fn default() -> Self {
        Self { p_red_fair: 0.5, p_red_biased: 0.6, prior_biased: 0.5 }
    }
}

impl CoinModel {
    pub fn validate(&self) -> Result<(), IdealError> {
        for (name, v) in
            [("p_red_fair", self.p_red_fair), ("p_red_biased", self.p_red_biased), ("prior_biased", self.prior_biased)]
        {
            if !(v > 0.0 && v < 1.0) {
                return Err(IdealError::InvalidModel(format!("{name} must be in (0,1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn p_red(&self, coin: Coin) -> f64 {
        match coin {
            Coin::Fair => self.p_red_fair,
            Coin::Biased => self.p_red_biased,
        }
    }

    /// Log likelihood ratio (biased over fair) of one red/blue count.
    fn log_lr(&self, red: usize, blue: usize) -> f64 {
        let lr_red = (self.p_red_biased / self.p_red_fair).ln();
        let lr_blue = ((1.0 - self.p_red_biased) / (1.0 - self.p_red_fair)).ln();
        red as f64 * lr_red + blue as f64 * lr_blue
    }
}

/// An ordered red/blue disk sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Disk>", into = "Vec<Disk>")]
pub struct StimulusSequence {
    disks: Vec<Disk>,
}

impl StimulusSequence {
    pub fn new(disks: Vec<Disk>) -> Result<Self, IdealError> {
        if disks.is_empty() {
            return Err(IdealError::EmptySequence);
        }
        Ok(Self { disks })
    }

    pub fn parse(s: &str) -> Result<Self, IdealError> {
        let disks = s
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                'R' | 'r' => Ok(Disk::Red),
                'B' | 'b' => Ok(Disk::Blue),
                other => Err(IdealError::InvalidDisk(other.to_string())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(disks)
    }

    /// `red` red disks spread evenly among `len` positions.
    pub fn from_counts(len: usize, red: usize) -> Result<Self, IdealError> {
        assert!(red <= len, "red count exceeds length");
        let disks =
            (0..len).map(|i| if (i + 1) * red / len > i * red / len { Disk::Red } else { Disk::Blue }).collect();
        Self::new(disks)
    }

    pub fn disks(&self) -> &[Disk] {
        &self.disks
    }

    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn red(&self) -> usize {
        self.disks.iter().filter(|d| **d == Disk::Red).count()
    }

    pub fn blue(&self) -> usize {
        self.len() - self.red()
    }

    pub fn concat<'a>(seqs: impl IntoIterator<Item = &'a StimulusSequence>) -> Result<Self, IdealError> {
        Self::new(seqs.into_iter().flat_map(|s| s.disks.iter().copied()).collect())
    }
}

impl fmt::Display for StimulusSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.disks.iter().try_for_each(|d| write!(f, "{}", d.as_char()))
    }
}

impl TryFrom<Vec<Disk>> for StimulusSequence {
    type Error = IdealError;

    fn try_from(disks: Vec<Disk>) -> Result<Self, Self::Error> {
        Self::new(disks)
    }
}

impl From<StimulusSequence> for Vec<Disk> {
    fn from(s: StimulusSequence) -> Vec<Disk> {
        s.disks
    }
}

pub type IdealResponse = Response;

pub fn sequence_likelihood(seq: &StimulusSequence, coin: Coin, model: &CoinModel) -> f64 {
    let p = model.p_red(coin);
    p.powi(seq.red() as i32) * (1.0 - p).powi(seq.blue() as i32)
}

fn ideal_from_counts(red: usize, blue: usize, model: &CoinModel) -> IdealResponse {
    // Posterior of the biased coin via log-odds; stable for long sequences.
    let log_prior = (model.prior_biased / (1.0 - model.prior_biased)).ln();
    let log_post_odds = log_prior + model.log_lr(red, blue);
    let p_biased = 1.0 / (1.0 + (-log_post_odds).exp());
    let (decision, p) = if p_biased > 0.5 {
        (Decision::Positive, p_biased)
    } else if p_biased < 0.5 {
        (Decision::Negative, 1.0 - p_biased)
    } else {
        (POSTERIOR_TIE_DECISION, 0.5)
    };
    Response { decision, confidence: Confidence::half(p).expect("posterior max is >= 0.5") }
}

/// Posterior-maximizing decision and its posterior probability.
pub fn ideal_response(seq: &StimulusSequence, model: &CoinModel) -> IdealResponse {
    ideal_from_counts(seq.red(), seq.blue(), model)
}

/// Ideal response to the disks of all sequences taken together.
pub fn pooled_ideal(seqs: &[StimulusSequence], model: &CoinModel) -> Result<IdealResponse, IdealError> {
    let pooled = StimulusSequence::concat(seqs)?;
    Ok(ideal_response(&pooled, model))
}

/// Finds a sequence whose ideal response matches `target` within `tolerance`.
///
/// Scans every (length, red count) pair and returns the closest match, the
/// shorter length winning ties.
pub fn find_sequence(
    target: &IdealResponse,
    lengths: RangeInclusive<usize>,
    tolerance: f64,
    model: &CoinModel,
) -> Result<StimulusSequence, IdealError> {
    candidate_sequences(target, lengths.clone(), tolerance, model).into_iter().next().map(|(seq, _)| seq).ok_or_else(
        || IdealError::NoSequence {
            target: format!("({}, {:.4})", target.decision, target.p()),
            lengths: (*lengths.start(), *lengths.end()),
            tolerance,
        },
    )
}

/// All matching sequences, closest first, with their achieved ideal response.
pub fn candidate_sequences(
    target: &IdealResponse,
    lengths: RangeInclusive<usize>,
    tolerance: f64,
    model: &CoinModel,
) -> Vec<(StimulusSequence, IdealResponse)> {
    let mut found: Vec<(f64, usize, usize, IdealResponse)> = Vec::new();
    for len in lengths.filter(|&l| l >= 1) {
        for red in 0..=len {
            let ideal = ideal_from_counts(red, len - red, model);
            let err = (ideal.p() - target.p()).abs();
            if ideal.decision == target.decision && err <= tolerance {
                found.push((err, len, red, ideal));
            }
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    found
        .into_iter()
        .map(|(_, len, red, ideal)| (StimulusSequence::from_counts(len, red).expect("len >= 1"), ideal))
        .collect()
}

/// Independent per-disk draws from the named coin.
pub fn generate_sequence<R: Rng + ?Sized>(
    coin: Coin,
    length: usize,
    model: &CoinModel,
    rng: &mut R,
) -> Result<StimulusSequence, IdealError> {
    let p = model.p_red(coin);
    let disks = (0..length).map(|_| if rng.random::<f64>() < p { Disk::Red } else { Disk::Blue }).collect();
    StimulusSequence::new(disks)
}
