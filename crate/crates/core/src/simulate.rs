//! Monte-Carlo generation of individual and group responses under the
//! noisy adapted-CWMV model.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{
    confidence_from_evidence, from_full_scale, group_evidence, AggregationError, Decision, Response,
};
use crate::ideal::CoinModel;
use crate::scenario::{Scenario, ScenarioFile, MEMBERS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
}

/// Noise levels and aggregation distortions of the cognitive model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// NaN when unknown (serialized as null).
    #[serde(with = "crate::serde_util::non_finite")]
    pub sigma_i: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_g: f64,
}

impl ModelParams {
    /// Noise-free naive CWMV.
    pub const IDEAL: ModelParams = ModelParams { sigma_i: 0.0, beta: 1.0, gamma: 1.0, sigma_g: 0.0 };

    pub fn new(sigma_i: f64, beta: f64, gamma: f64, sigma_g: f64) -> Result<Self, SimError> {
        let p = Self { sigma_i, beta, gamma, sigma_g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in
            [("sigma_i", self.sigma_i), ("beta", self.beta), ("gamma", self.gamma), ("sigma_g", self.sigma_g)]
        {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::InvalidParams(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// What to do when the aggregated evidence is exactly balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    #[default]
    Error,
    /// Fair coin from the caller's random stream.
    Coin,
}

/// One trial of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub group_id: u32,
    /// 1-based position within the group's session.
    pub trial: u32,
    pub scenario_id: String,
    pub truth: Decision,
    /// Ideal responses to the sequence each member saw, by member.
    pub ideal_members: [Response; MEMBERS],
    pub ideal_group: Response,
    pub members: [Response; MEMBERS],
    pub group: Response,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub trials: Vec<TrialRecord>,
}

impl Dataset {
    pub fn new(trials: Vec<TrialRecord>) -> Self {
        Self { trials }
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn group_ids(&self) -> Vec<u32> {
        self.trials.iter().map(|t| t.group_id).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn group_trials(&self, group_id: u32) -> Vec<TrialRecord> {
        self.trials.iter().filter(|t| t.group_id == group_id).cloned().collect()
    }

    /// Trials split by group, ordered by group id.
    pub fn by_group(&self) -> Vec<(u32, Vec<TrialRecord>)> {
        self.group_ids().into_iter().map(|g| (g, self.group_trials(g))).collect()
    }

    /// Checks every trial against the scenario list.
    pub fn validate_against(&self, scenarios: &ScenarioFile) -> Result<(), SimError> {
        for t in &self.trials {
            if !scenarios.scenarios.iter().any(|s| s.id == t.scenario_id) {
                return Err(SimError::InvalidDesign(format!(
                    "group {} trial {} references unknown scenario {}",
                    t.group_id, t.trial, t.scenario_id
                )));
            }
        }
        Ok(())
    }
}

/// A scenario with its ideal responses resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub id: String,
    pub ideal_members: [Response; MEMBERS],
    pub ideal_group: Response,
}

impl ResolvedScenario {
    pub fn from_scenario(s: &Scenario, model: &CoinModel) -> Self {
        Self { id: s.id.clone(), ideal_members: s.member_ideals(model), ideal_group: s.group_ideal(model) }
    }

    /// The generating coin, identified with the ideal group decision.
    pub fn truth(&self) -> Decision {
        self.ideal_group.decision
    }
}

/// Scenarios repeated with the member-to-sequence assignment rotated on
/// each repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDesign {
    pub scenarios: Vec<ResolvedScenario>,
    pub repetitions: usize,
    /// Shuffle trial order per group.
    pub shuffle: bool,
}

/// One scheduled trial: which scenario, and the rotation offset (member `m`
/// sees sequence `(m + rotation) % 3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledTrial {
    pub scenario: usize,
    pub rotation: usize,
}

impl ExperimentDesign {
    /// Four scenarios, three rotated repetitions, shuffled order: 12 trials.
    pub fn standard(file: &ScenarioFile) -> Self {
        Self {
            scenarios: file.scenarios.iter().map(|s| ResolvedScenario::from_scenario(s, &file.model)).collect(),
            repetitions: 3,
            shuffle: true,
        }
    }

    pub fn trials_per_group(&self) -> usize {
        self.scenarios.len() * self.repetitions
    }

    pub fn schedule<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<ScheduledTrial> {
        let mut out: Vec<ScheduledTrial> = (0..self.repetitions)
            .flat_map(|rep| {
                (0..self.scenarios.len()).map(move |s| ScheduledTrial { scenario: s, rotation: rep % MEMBERS })
            })
            .collect();
        if self.shuffle {
            out.shuffle(rng);
        }
        out
    }
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Reported individual response: ideal confidence plus Gaussian noise on the
/// full scale toward the ideal decision, clipped to `[0, 1]`. Noise below 0.5
/// flips the decision.
pub fn simulate_individual<R: Rng + ?Sized>(ideal: &Response, sigma_i: f64, rng: &mut R) -> Response {
    let eps = sigma_i * standard_normal(rng);
    let v = (ideal.p() + eps).clamp(0.0, 1.0);
    from_full_scale(v, ideal.decision).expect("clamped into [0, 1]")
}

/// Reported group response: adapted CWMV of the members, mapped toward the
/// truth, plus Gaussian noise; noise below 0.5 flips the decision.
pub fn simulate_group<R: Rng + ?Sized>(
    individuals: &[Response],
    params: &ModelParams,
    truth: Decision,
    tie_policy: TiePolicy,
    rng: &mut R,
) -> Result<Response, SimError> {
    let evidence = match group_evidence(individuals, params.beta) {
        Ok(e) => e,
        Err(AggregationError::Unresolvable) if tie_policy == TiePolicy::Coin => 0.0,
        Err(e) => return Err(e.into()),
    };
    let decision = match Decision::from_sign(evidence) {
        Some(d) => d,
        None => match tie_policy {
            TiePolicy::Error => return Err(AggregationError::Tie.into()),
            TiePolicy::Coin => {
                log::info!("balanced group evidence resolved by coin flip");
                if rng.random::<bool>() {
                    Decision::Positive
                } else {
                    Decision::Negative
                }
            }
        },
    };
    let p = confidence_from_evidence(evidence, params.gamma);
    let full = if decision == truth { p } else { 1.0 - p };
    let eps = params.sigma_g * standard_normal(rng);
    if eps == 0.0 {
        // keep the exact aggregate when there is no noise
        return Ok(Response::new(decision, p)?);
    }
    Ok(from_full_scale((full + eps).clamp(0.0, 1.0), truth)?)
}

/// Random stream for one group: the seed's ChaCha stream number `group_id`.
pub fn group_rng(seed: u64, group_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(group_id));
    rng
}

/// Simulates one group's full session.
pub fn simulate_session(
    design: &ExperimentDesign,
    params: &ModelParams,
    group_id: u32,
    seed: u64,
    tie_policy: TiePolicy,
) -> Result<Vec<TrialRecord>, SimError> {
    let mut rng = group_rng(seed, group_id);
    let schedule = design.schedule(&mut rng);
    let mut trials = Vec::with_capacity(schedule.len());
    for (i, slot) in schedule.iter().enumerate() {
        let sc = &design.scenarios[slot.scenario];
        let ideal_members: [Response; MEMBERS] =
            std::array::from_fn(|m| sc.ideal_members[(m + slot.rotation) % MEMBERS]);
        let members = ideal_members.map(|ideal| simulate_individual(&ideal, params.sigma_i, &mut rng));
        let truth = sc.truth();
        let group = simulate_group(&members, params, truth, tie_policy, &mut rng)?;
        trials.push(TrialRecord {
            group_id,
            trial: (i + 1) as u32,
            scenario_id: sc.id.clone(),
            truth,
            ideal_members,
            ideal_group: sc.ideal_group,
            members,
            group,
        });
    }
    Ok(trials)
}

/// Simulates `n_groups` groups (ids `1..=n_groups`). Groups run in parallel,
/// each on its own stream of `seed`, and are merged in id order.
pub fn run_experiment(
    design: &ExperimentDesign,
    params: &ModelParams,
    n_groups: usize,
    seed: u64,
    tie_policy: TiePolicy,
) -> Result<Dataset, SimError> {
    params.validate()?;
    if n_groups == 0 {
        return Err(SimError::InvalidDesign("n_groups must be at least 1".into()));
    }
    if design.scenarios.is_empty() || design.repetitions == 0 {
        return Err(SimError::InvalidDesign("design has no trials".into()));
    }
    let sessions = (1..=n_groups as u32)
        .into_par_iter()
        .map(|g| simulate_session(design, params, g, seed, tie_policy))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset::new(sessions.into_iter().flatten().collect()))
}

/// Mixes a base seed with an index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{cwmv, to_full_scale};
    use crate::scenario::{build_scenarios, default_scenario_spec};

    fn design() -> ExperimentDesign {
        ExperimentDesign::standard(&build_scenarios(&default_scenario_spec()).unwrap())
    }

    fn scenario_two() -> Vec<Response> {
        vec![
            Response::new(Decision::Positive, 0.76).unwrap(),
            Response::new(Decision::Negative, 0.51).unwrap(),
            Response::new(Decision::Negative, 0.51).unwrap(),
        ]
    }

    /// Standard normal CDF by Simpson quadrature of the density.
    fn phi(x: f64) -> f64 {
        let n = 20_000;
        let (a, b) = (-12.0, x);
        let h = (b - a) / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn zero_noise_individual_is_ideal() {
        let ideal = Response::new(Decision::Positive, 0.54).unwrap();
        let mut rng = group_rng(1, 1);
        assert_eq!(simulate_individual(&ideal, 0.0, &mut rng), ideal);
    }

    #[test]
    fn individual_replay() {
        let ideal = Response::new(Decision::Negative, 0.7).unwrap();
        let a = simulate_individual(&ideal, 0.2, &mut group_rng(9, 3));
        let b = simulate_individual(&ideal, 0.2, &mut group_rng(9, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn flip_rate_matches_gaussian_tail() {
        let grid = [(0.54, 0.133), (0.62, 0.133), (0.76, 0.2), (0.51, 0.05)];
        for (c, sigma) in grid {
            let ideal = Response::new(Decision::Positive, c).unwrap();
            let mut rng = group_rng(2024, 0);
            let n = 100_000;
            let flips =
                (0..n).filter(|_| simulate_individual(&ideal, sigma, &mut rng).decision != ideal.decision).count();
            let rate = flips as f64 / n as f64;
            let expected = phi(-(c - 0.5) / sigma);
            let bound = 3.0 * (expected * (1.0 - expected) / n as f64).sqrt();
            assert!((rate - expected).abs() < bound, "c={c} rate={rate} expected={expected}");
        }
        assert!((phi(-0.04 / 0.133) - 0.382).abs() < 0.001);
    }

    #[test]
    fn noiseless_group_examples() {
        let mut rng = group_rng(0, 0);
        let g = simulate_group(&scenario_two(), &ModelParams::IDEAL, Decision::Positive, TiePolicy::Error, &mut rng)
            .unwrap();
        assert_eq!(g.decision, Decision::Positive);
        assert!((g.p() - 0.745).abs() < 5e-4);

        let params = ModelParams::new(0.0, 0.67, 0.53, 0.0).unwrap();
        let g = simulate_group(&scenario_two(), &params, Decision::Positive, TiePolicy::Error, &mut rng).unwrap();
        assert_eq!(g.decision, Decision::Positive);
        assert!((g.p() - 0.6130780977797023).abs() < 1e-12);
    }

    #[test]
    fn group_replay_and_range() {
        let params = ModelParams::new(0.1, 0.7, 0.5, 0.2).unwrap();
        for seed in 0..200 {
            let a =
                simulate_group(&scenario_two(), &params, Decision::Positive, TiePolicy::Error, &mut group_rng(seed, 1))
                    .unwrap();
            let b =
                simulate_group(&scenario_two(), &params, Decision::Positive, TiePolicy::Error, &mut group_rng(seed, 1))
                    .unwrap();
            assert_eq!(a, b);
            assert!((0.5..=1.0).contains(&a.p()));
        }
    }

    #[test]
    fn tie_policy() {
        let tied = [Response::new(Decision::Positive, 0.7).unwrap(), Response::new(Decision::Negative, 0.7).unwrap()];
        let params = ModelParams::new(0.0, 1.0, 1.0, 0.0).unwrap();
        let err = simulate_group(&tied, &params, Decision::Positive, TiePolicy::Error, &mut group_rng(0, 0));
        assert_eq!(err, Err(SimError::Aggregation(AggregationError::Tie)));
        let g = simulate_group(&tied, &params, Decision::Positive, TiePolicy::Coin, &mut group_rng(0, 0)).unwrap();
        assert_eq!(g.p(), 0.5);
    }

    #[test]
    fn standard_design_counts() {
        let d = design();
        let data =
            run_experiment(&d, &ModelParams::new(0.133, 0.67, 0.53, 0.11).unwrap(), 7, 11, TiePolicy::Error).unwrap();
        assert_eq!(data.trials.len(), 84);
        assert_eq!(data.group_ids(), (1..=7).collect::<Vec<_>>());
        for (_, trials) in data.by_group() {
            assert_eq!(trials.len(), 12);
            // each scenario three times, each rotation once per scenario
            for s in &d.scenarios {
                let reps: Vec<_> = trials.iter().filter(|t| t.scenario_id == s.id).collect();
                assert_eq!(reps.len(), 3);
                let firsts: BTreeSet<String> = reps.iter().map(|t| format!("{:?}", t.ideal_members[0])).collect();
                let distinct_seqs: BTreeSet<String> = s.ideal_members.iter().map(|r| format!("{r:?}")).collect();
                assert_eq!(firsts.len(), distinct_seqs.len());
            }
        }
        for t in &data.trials {
            for m in t.members.iter().chain(std::iter::once(&t.group)) {
                assert!((0.5..=1.0).contains(&m.p()));
                assert!((0.0..=1.0).contains(&to_full_scale(m, t.truth)));
            }
        }
    }

    #[test]
    fn noiseless_experiment_reproduces_ideal_groups() {
        let d = design();
        let data = run_experiment(&d, &ModelParams::IDEAL, 3, 5, TiePolicy::Error).unwrap();
        for t in &data.trials {
            assert_eq!(t.members, t.ideal_members);
            assert_eq!(t.group.decision, t.ideal_group.decision);
            assert!((t.group.p() - t.ideal_group.p()).abs() < 1e-10);
            assert_eq!(t.group, cwmv(&t.members).unwrap());
        }
        let expected = [("I", 0.96), ("II", 0.75), ("III", 0.66), ("IV", 0.54)];
        for (id, g) in expected {
            let t = data.trials.iter().find(|t| t.scenario_id == id).unwrap();
            assert!((t.group.p() - g).abs() <= 0.01);
        }
    }

    #[test]
    fn experiment_is_deterministic() {
        let d = design();
        let params = ModelParams::new(0.133, 0.67, 0.53, 0.11).unwrap();
        let a = run_experiment(&d, &params, 5, 77, TiePolicy::Error).unwrap();
        let b = run_experiment(&d, &params, 5, 77, TiePolicy::Error).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = run_experiment(&d, &params, 5, 78, TiePolicy::Error).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn groups_do_not_depend_on_group_count() {
        let d = design();
        let params = ModelParams::new(0.133, 0.67, 0.53, 0.11).unwrap();
        let small = run_experiment(&d, &params, 2, 3, TiePolicy::Error).unwrap();
        let large = run_experiment(&d, &params, 6, 3, TiePolicy::Error).unwrap();
        assert_eq!(small.group_trials(2), large.group_trials(2));
    }

    #[test]
    fn rejects_zero_groups_and_bad_params() {
        let d = design();
        assert!(run_experiment(&d, &ModelParams::IDEAL, 0, 1, TiePolicy::Error).is_err());
        assert!(ModelParams::new(-0.1, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: BTreeSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
