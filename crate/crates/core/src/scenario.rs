//! Three-member stimulus scenarios and the scenario file format.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::aggregation::{Decision, Response};
use crate::ideal::{candidate_sequences, ideal_response, pooled_ideal, CoinModel, IdealError, StimulusSequence};

pub const MEMBERS: usize = 3;
pub const DEFAULT_LENGTHS: (usize, usize) = (11, 13);
pub const DEFAULT_TOLERANCE: f64 = 0.01;

/// Target ideal responses for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTargets {
    pub members: [Response; MEMBERS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<Response>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub sequences: [StimulusSequence; MEMBERS],
    pub targets: ScenarioTargets,
}

impl Scenario {
    pub fn member_ideals(&self, model: &CoinModel) -> [Response; MEMBERS] {
        self.sequences.clone().map(|s| ideal_response(&s, model))
    }

    pub fn group_ideal(&self, model: &CoinModel) -> Response {
        pooled_ideal(&self.sequences, model).expect("scenario sequences are nonempty")
    }
}

/// Input to scenario construction: targets plus search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default = "default_lengths")]
    pub lengths: (usize, usize),
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub model: CoinModel,
    pub scenarios: Vec<ScenarioTargetSpec>,
}

fn default_lengths() -> (usize, usize) {
    DEFAULT_LENGTHS
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTargetSpec {
    pub id: String,
    #[serde(flatten)]
    pub targets: ScenarioTargets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub scenarios: Vec<Scenario>,
    pub model: CoinModel,
}

fn target(d: Decision, p: f64) -> Response {
    Response::new(d, p).expect("table values are on the half scale")
}

/// The four scenarios of the coin experiment, as rounded ideal responses.
pub fn default_scenario_spec() -> ScenarioSpec {
    use Decision::{Negative as FAIR, Positive as BIASED};
    let row = |id: &str, m: [(Decision, f64); 3], g: (Decision, f64)| ScenarioTargetSpec {
        id: id.to_string(),
        targets: ScenarioTargets { members: m.map(|(d, p)| target(d, p)), group: Some(target(g.0, g.1)) },
    };
    ScenarioSpec {
        lengths: DEFAULT_LENGTHS,
        tolerance: DEFAULT_TOLERANCE,
        model: CoinModel::default(),
        scenarios: vec![
            row("I", [(FAIR, 0.87), (FAIR, 0.70), (FAIR, 0.62)], (FAIR, 0.96)),
            row("II", [(BIASED, 0.76), (FAIR, 0.51), (FAIR, 0.51)], (BIASED, 0.75)),
            row("III", [(BIASED, 0.88), (BIASED, 0.54), (FAIR, 0.81)], (BIASED, 0.66)),
            row("IV", [(FAIR, 0.81), (BIASED, 0.58), (BIASED, 0.72)], (FAIR, 0.54)),
        ],
    }
}

/// Picks one sequence per member so every member target, and the group
/// target when present, is met within `tolerance`. Among feasible
/// combinations the smallest group error wins, then the smallest summed
/// member error.
pub fn build_scenario(
    spec: &ScenarioTargetSpec,
    lengths: RangeInclusive<usize>,
    tolerance: f64,
    model: &CoinModel,
) -> Result<Scenario, IdealError> {
    let no_sequence = |t: &Response| IdealError::NoSequence {
        target: format!("({}, {:.4})", t.decision, t.p()),
        lengths: (*lengths.start(), *lengths.end()),
        tolerance,
    };
    let mut candidates = Vec::with_capacity(MEMBERS);
    for t in &spec.targets.members {
        let c = candidate_sequences(t, lengths.clone(), tolerance, model);
        if c.is_empty() {
            return Err(no_sequence(t));
        }
        candidates.push(c);
    }

    let mut best: Option<(f64, f64, [usize; MEMBERS])> = None;
    for i in 0..candidates[0].len() {
        for j in 0..candidates[1].len() {
            for k in 0..candidates[2].len() {
                let picks = [&candidates[0][i], &candidates[1][j], &candidates[2][k]];
                let member_err: f64 =
                    picks.iter().zip(&spec.targets.members).map(|((_, ideal), t)| (ideal.p() - t.p()).abs()).sum();
                let group_err = match &spec.targets.group {
                    Some(g) => {
                        let seqs = picks.map(|(s, _)| s.clone());
                        let pooled = pooled_ideal(&seqs, model)?;
                        let err = (pooled.p() - g.p()).abs();
                        if pooled.decision != g.decision || err > tolerance {
                            continue;
                        }
                        err
                    }
                    None => 0.0,
                };
                let better = match &best {
                    None => true,
                    Some((ge, me, _)) => (group_err, member_err) < (*ge, *me),
                };
                if better {
                    best = Some((group_err, member_err, [i, j, k]));
                }
            }
        }
    }

    let (_, _, [i, j, k]) = best.ok_or_else(|| no_sequence(spec.targets.group.as_ref().expect("group target")))?;
    Ok(Scenario {
        id: spec.id.clone(),
        sequences: [candidates[0][i].0.clone(), candidates[1][j].0.clone(), candidates[2][k].0.clone()],
        targets: spec.targets.clone(),
    })
}

pub fn build_scenarios(spec: &ScenarioSpec) -> Result<ScenarioFile, IdealError> {
    spec.model.validate()?;
    let lengths = spec.lengths.0..=spec.lengths.1;
    let scenarios = spec
        .scenarios
        .iter()
        .map(|s| build_scenario(s, lengths.clone(), spec.tolerance, &spec.model))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScenarioFile { scenarios, model: spec.model })
}
