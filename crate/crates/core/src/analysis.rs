//! Dataset-level summaries: accuracy of real versus simulated groups,
//! calibration of reported against ideal confidences, and agreement between
//! reported and model-simulated group confidences.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{cwmv, group_evidence, mv, AggregationError, Decision};
use crate::fit::{fit_by_group, predicted_full_scale, FitError, GridSpec, GroupFitSet, ModelVariant};
use crate::simulate::{group_rng, Dataset, TiePolicy, TrialRecord};
use crate::stats::{
    calibration_regression, exact_binomial_test, fisher_mean_r, mean, paired_t_test, pearson_r, rmse, RegressionFit,
    Sides, StatsError, Summary, TTest,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("dataset has no trials")]
    Empty,
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

/// Percent of trials decided correctly, per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub group_id: u32,
    pub n_trials: usize,
    pub real: f64,
    pub cwmv: f64,
    pub mv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub groups: Vec<GroupAccuracy>,
    pub real: Summary,
    pub cwmv: Summary,
    pub mv: Summary,
    /// Balanced CWMV or MV votes resolved by coin.
    pub ties: usize,
}

impl AccuracySummary {
    pub fn from_groups(groups: Vec<GroupAccuracy>, ties: usize) -> Self {
        let col = |f: fn(&GroupAccuracy) -> f64| Summary::of(&groups.iter().map(f).collect::<Vec<_>>());
        Self { real: col(|g| g.real), cwmv: col(|g| g.cwmv), mv: col(|g| g.mv), groups, ties }
    }
}

fn resolve<R: Rng>(
    result: Result<Decision, AggregationError>,
    tie_policy: TiePolicy,
    rng: &mut R,
    ties: &mut usize,
) -> Result<Decision, AggregationError> {
    match result {
        Err(AggregationError::Tie | AggregationError::Unresolvable) if tie_policy == TiePolicy::Coin => {
            *ties += 1;
            info!("tied vote resolved by coin flip");
            Ok(if rng.random::<bool>() { Decision::Positive } else { Decision::Negative })
        }
        other => other,
    }
}

/// Accuracy of the real group decision and of CWMV and MV applied to the
/// members' responses. Ties are resolved per `tie_policy` with a coin drawn
/// from group `g`'s stream of `seed`.
pub fn accuracy_table(dataset: &Dataset, tie_policy: TiePolicy, seed: u64) -> Result<AccuracySummary, AnalysisError> {
    if dataset.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut ties = 0;
    let mut groups = Vec::new();
    for (group_id, trials) in dataset.by_group() {
        let mut rng = group_rng(seed, group_id);
        let (mut real, mut wv, mut mj) = (0usize, 0usize, 0usize);
        for t in &trials {
            real += usize::from(t.group.decision == t.truth);
            let c = resolve(cwmv(&t.members).map(|r| r.decision), tie_policy, &mut rng, &mut ties)?;
            wv += usize::from(c == t.truth);
            let decisions = t.members.map(|r| r.decision);
            let m = resolve(mv(&decisions), tie_policy, &mut rng, &mut ties)?;
            mj += usize::from(m == t.truth);
        }
        let pct = |k: usize| 100.0 * k as f64 / trials.len() as f64;
        groups.push(GroupAccuracy { group_id, n_trials: trials.len(), real: pct(real), cwmv: pct(wv), mv: pct(mj) });
    }
    Ok(AccuracySummary::from_groups(groups, ties))
}

/// Calibration of one individual (`member` set) or one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCalibration {
    pub group_id: u32,
    pub member: Option<usize>,
    pub n: usize,
    pub r: Option<f64>,
    pub regression: Option<RegressionFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub units: Vec<UnitCalibration>,
    pub mean_r: Option<f64>,
    pub mean_value_at_half: Option<f64>,
    pub mean_slope: Option<f64>,
}

/// Fisher-pooled mean correlation. Perfect correlations are pulled just
/// inside (-1, 1) so they can be pooled.
pub fn pooled_r(rs: &[f64]) -> Option<f64> {
    if rs.is_empty() {
        return None;
    }
    const EDGE: f64 = 1.0 - 1e-15;
    let clamped: Vec<f64> = rs.iter().map(|r| r.clamp(-EDGE, EDGE)).collect();
    fisher_mean_r(&clamped).ok()
}

fn summarize_units(units: Vec<UnitCalibration>) -> CalibrationSummary {
    let rs: Vec<f64> = units.iter().filter_map(|u| u.r).collect();
    let fits: Vec<RegressionFit> = units.iter().filter_map(|u| u.regression).collect();
    let avg = |f: fn(&RegressionFit) -> f64| (!fits.is_empty()).then(|| mean(&fits.iter().map(f).collect::<Vec<_>>()));
    CalibrationSummary {
        mean_r: pooled_r(&rs),
        mean_value_at_half: avg(|f| f.value_at_half),
        mean_slope: avg(|f| f.slope),
        units,
    }
}

fn calibrate_unit(group_id: u32, member: Option<usize>, points: &[(f64, f64)]) -> UnitCalibration {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let r = pearson_r(&xs, &ys).ok();
    let regression = calibration_regression(points).ok();
    if r.is_none() || regression.is_none() {
        warn!("group {group_id} member {member:?}: calibration undefined for {} points", points.len());
    }
    UnitCalibration { group_id, member, n: points.len(), r, regression }
}

/// `(ideal confidence, reported confidence on the full scale toward the
/// ideal decision)` for each member response.
pub fn individual_points(trials: &[TrialRecord]) -> BTreeMap<(u32, usize), Vec<(f64, f64)>> {
    let mut out: BTreeMap<(u32, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for t in trials {
        for (m, (r, ideal)) in t.members.iter().zip(&t.ideal_members).enumerate() {
            out.entry((t.group_id, m)).or_default().push((ideal.p(), r.full_scale(ideal.decision)));
        }
    }
    out
}

/// `(ideal group confidence, reported group confidence toward the ideal
/// group decision)` per group.
pub fn group_points(trials: &[TrialRecord]) -> BTreeMap<u32, Vec<(f64, f64)>> {
    let mut out: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for t in trials {
        out.entry(t.group_id).or_default().push((t.ideal_group.p(), t.group.full_scale(t.ideal_group.decision)));
    }
    out
}

pub fn individual_calibration(dataset: &Dataset) -> CalibrationSummary {
    let units =
        individual_points(&dataset.trials).into_iter().map(|((g, m), pts)| calibrate_unit(g, Some(m), &pts)).collect();
    summarize_units(units)
}

pub fn group_calibration(dataset: &Dataset) -> CalibrationSummary {
    let units = group_points(&dataset.trials).into_iter().map(|(g, pts)| calibrate_unit(g, None, &pts)).collect();
    summarize_units(units)
}

/// Reported versus simulated group confidences for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationAgreement {
    pub beta: f64,
    pub gamma: f64,
    pub mean_r: Option<f64>,
    pub rmse: f64,
    pub group_rmse: Vec<f64>,
}

fn agreement(dataset: &Dataset, beta: f64, gamma: f64) -> Result<SimulationAgreement, AnalysisError> {
    let mut all = Vec::new();
    let mut rs = Vec::new();
    let mut group_rmse = Vec::new();
    for (g, trials) in dataset.by_group() {
        let pairs: Vec<(f64, f64)> =
            trials.iter().map(|t| (predicted_full_scale(t, beta, gamma), t.group.full_scale(t.truth))).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        match pearson_r(&xs, &ys) {
            Ok(r) => rs.push(r),
            Err(e) => warn!("group {g}: simulated-reported correlation undefined ({e})"),
        }
        group_rmse.push(rmse(&pairs)?);
        all.extend(pairs);
    }
    Ok(SimulationAgreement { beta, gamma, mean_r: pooled_r(&rs), rmse: rmse(&all)?, group_rmse })
}

/// A count-based sign test across groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub k: u64,
    pub n: u64,
    pub p: f64,
}

/// Two-sided exact binomial test of how many of `values` satisfy `pred`.
pub fn sign_test(values: &[f64], pred: impl Fn(f64) -> bool) -> Result<SignTest, StatsError> {
    let n = values.len() as u64;
    let k = values.iter().filter(|&&v| pred(v)).count() as u64;
    Ok(SignTest { k, n, p: exact_binomial_test(k, n, 0.5, Sides::Two)? })
}

/// Sign test over non-zero paired differences `a - b > 0`.
fn paired_sign_test(a: &[f64], b: &[f64]) -> Result<SignTest, StatsError> {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    sign_test(&diffs, |d| d > 0.0)
}

fn diffs(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTests {
    pub cwmv_vs_mv_t: Option<TTest>,
    pub real_vs_mv_t: Option<TTest>,
    pub cwmv_vs_mv_sign: SignTest,
    pub real_vs_mv_sign: SignTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCalibrationTests {
    pub r_positive: SignTest,
    pub slope_below_one: SignTest,
    pub value_at_half_above_half: SignTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub grid: GridSpec,
    pub tie_policy: TiePolicy,
    pub seed: u64,
    /// Adapted-CWMV parameters; the mean of the per-group fits when unset.
    pub adapted: Option<(f64, f64)>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { grid: GridSpec::default(), tie_policy: TiePolicy::Coin, seed: 0, adapted: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub accuracy: AccuracySummary,
    pub accuracy_tests: AccuracyTests,
    pub individual_calibration: CalibrationSummary,
    pub group_calibration: CalibrationSummary,
    pub group_calibration_tests: GroupCalibrationTests,
    pub naive: SimulationAgreement,
    pub adapted: SimulationAgreement,
    /// Paired t test of per-group RMSE, naive minus adapted.
    pub rmse_t: Option<TTest>,
    pub fits: GroupFitSet,
}

fn optional_t(d: &[f64]) -> Option<TTest> {
    match paired_t_test(d) {
        Ok(t) => Some(t),
        Err(e) => {
            warn!("t test skipped: {e}");
            None
        }
    }
}

pub fn analyze(dataset: &Dataset, config: &AnalysisConfig) -> Result<AnalysisReport, AnalysisError> {
    if dataset.is_empty() {
        return Err(AnalysisError::Empty);
    }
    // every trial must aggregate under the naive rule, or be tolerated as a tie
    for t in &dataset.trials {
        if let Err(e) = group_evidence(&t.members, 1.0) {
            if config.tie_policy == TiePolicy::Error {
                return Err(e.into());
            }
        }
    }
    let accuracy = accuracy_table(dataset, config.tie_policy, config.seed)?;
    let col = |f: fn(&GroupAccuracy) -> f64| accuracy.groups.iter().map(f).collect::<Vec<_>>();
    let (real, wv, mj) = (col(|g| g.real), col(|g| g.cwmv), col(|g| g.mv));
    let accuracy_tests = AccuracyTests {
        cwmv_vs_mv_t: optional_t(&diffs(&wv, &mj)),
        real_vs_mv_t: optional_t(&diffs(&real, &mj)),
        cwmv_vs_mv_sign: paired_sign_test(&wv, &mj)?,
        real_vs_mv_sign: paired_sign_test(&real, &mj)?,
    };

    let individual = individual_calibration(dataset);
    let group = group_calibration(dataset);
    let rs: Vec<f64> = group.units.iter().filter_map(|u| u.r).collect();
    let slopes: Vec<f64> = group.units.iter().filter_map(|u| u.regression.map(|f| f.slope)).collect();
    let halves: Vec<f64> = group.units.iter().filter_map(|u| u.regression.map(|f| f.value_at_half)).collect();
    let group_calibration_tests = GroupCalibrationTests {
        r_positive: sign_test(&rs, |r| r > 0.0)?,
        slope_below_one: sign_test(&slopes, |s| s < 1.0)?,
        value_at_half_above_half: sign_test(&halves, |v| v > 0.5)?,
    };

    let fits = fit_by_group(dataset, ModelVariant::Full, &config.grid)?;
    let (beta, gamma) =
        config.adapted.unwrap_or_else(|| (mean(&fits.values(|p| p.beta)), mean(&fits.values(|p| p.gamma))));
    let naive = agreement(dataset, 1.0, 1.0)?;
    let adapted = agreement(dataset, beta, gamma)?;
    let rmse_t = optional_t(&diffs(&naive.group_rmse, &adapted.group_rmse));

    Ok(AnalysisReport {
        accuracy,
        accuracy_tests,
        individual_calibration: individual,
        group_calibration: group,
        group_calibration_tests,
        naive,
        adapted,
        rmse_t,
        fits,
    })
}

/// One row of the per-group summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: u32,
    pub real: f64,
    pub cwmv: f64,
    pub mv: f64,
    /// Regression value at ideal 0.5.
    pub intercept: f64,
    pub slope: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma_g: f64,
    /// Regression value at ideal 0.
    pub raw_intercept: f64,
}

impl AnalysisReport {
    pub fn group_rows(&self) -> Vec<GroupRow> {
        self.accuracy
            .groups
            .iter()
            .map(|a| {
                let reg =
                    self.group_calibration.units.iter().find(|u| u.group_id == a.group_id).and_then(|u| u.regression);
                let fit = self.fits.groups.iter().find(|g| g.group_id == a.group_id).map(|g| g.fit.params);
                GroupRow {
                    group: a.group_id,
                    real: a.real / 100.0,
                    cwmv: a.cwmv / 100.0,
                    mv: a.mv / 100.0,
                    intercept: reg.map_or(f64::NAN, |r| r.value_at_half),
                    slope: reg.map_or(f64::NAN, |r| r.slope),
                    beta: fit.map_or(f64::NAN, |p| p.beta),
                    gamma: fit.map_or(f64::NAN, |p| p.gamma),
                    sigma_g: fit.map_or(f64::NAN, |p| p.sigma_g),
                    raw_intercept: reg.map_or(f64::NAN, |r| r.intercept),
                }
            })
            .collect()
    }
}

/// Mean and SEM of `values` grouped by an ideal-confidence level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub series: String,
    pub ideal: f64,
    pub n: usize,
    pub mean: f64,
    pub sem: f64,
}

/// Tidy plotting series: per-level means of reported individual and group
/// confidences, and of naive and adapted simulations.
pub fn level_summaries(dataset: &Dataset, adapted: (f64, f64)) -> Vec<LevelSummary> {
    let mut series: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    let key = |x: f64| (x * 1e6).round() as u64;
    for t in &dataset.trials {
        for (r, ideal) in t.members.iter().zip(&t.ideal_members) {
            series.entry(("individual".into(), key(ideal.p()))).or_default().push(r.full_scale(ideal.decision));
        }
        let g = t.ideal_group.p();
        series.entry(("group".into(), key(g))).or_default().push(t.group.full_scale(t.ideal_group.decision));
        series.entry(("naive_cwmv".into(), key(g))).or_default().push(predicted_full_scale(t, 1.0, 1.0));
        series.entry(("adapted_cwmv".into(), key(g))).or_default().push(predicted_full_scale(t, adapted.0, adapted.1));
    }
    series
        .into_iter()
        .map(|((name, k), v)| LevelSummary {
            series: name,
            ideal: k as f64 / 1e6,
            n: v.len(),
            mean: mean(&v),
            sem: if v.len() > 1 { crate::stats::sem(&v) } else { 0.0 },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenarios, default_scenario_spec};
    use crate::simulate::{run_experiment, ExperimentDesign, ModelParams};

    fn design() -> ExperimentDesign {
        ExperimentDesign::standard(&build_scenarios(&default_scenario_spec()).unwrap())
    }

    #[test]
    fn group_accuracies_summarize() {
        let cols = [
            (75.0, 75.0, 66.7),
            (75.0, 83.3, 75.0),
            (58.3, 83.3, 58.3),
            (83.3, 66.7, 66.7),
            (75.0, 75.0, 75.0),
            (83.3, 83.3, 75.0),
            (83.3, 66.7, 50.0),
        ];
        let groups = cols
            .iter()
            .enumerate()
            .map(|(i, &(real, cwmv, mv))| GroupAccuracy { group_id: i as u32 + 1, n_trials: 12, real, cwmv, mv })
            .collect();
        let s = AccuracySummary::from_groups(groups, 0);
        assert!((s.real.mean - 76.2).abs() < 0.05);
        assert!((s.cwmv.mean - 76.2).abs() < 0.05);
        assert!((s.mv.mean - 66.7).abs() < 0.05);
        assert!((s.real.sd - 8.9).abs() < 0.05);
        assert!((s.mv.median - 66.7).abs() < 1e-9);
        assert!((s.cwmv.q25 - 70.85).abs() < 1e-9);
    }

    #[test]
    fn noise_free_dataset() {
        let data = run_experiment(&design(), &ModelParams::IDEAL, 4, 3, TiePolicy::Error).unwrap();
        let acc = accuracy_table(&data, TiePolicy::Error, 0).unwrap();
        for g in &acc.groups {
            assert_eq!((g.real, g.cwmv), (100.0, 100.0));
        }
        let grid: GridSpec = "b:0:2:0.1,g:0:2:0.1".parse().unwrap();
        let report =
            analyze(&data, &AnalysisConfig { grid, tie_policy: TiePolicy::Error, ..Default::default() }).unwrap();
        assert!((report.individual_calibration.mean_r.unwrap() - 1.0).abs() < 1e-12);
        assert!((report.group_calibration.mean_r.unwrap() - 1.0).abs() < 1e-12);
        assert!((report.naive.mean_r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(report.naive.rmse, 0.0);
        for u in &report.group_calibration.units {
            let f = u.regression.unwrap();
            assert!((f.slope - 1.0).abs() < 1e-9 && (f.value_at_half - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert_eq!(accuracy_table(&Dataset::default(), TiePolicy::Error, 0), Err(AnalysisError::Empty));
        assert!(matches!(analyze(&Dataset::default(), &AnalysisConfig::default()), Err(AnalysisError::Empty)));
    }

    #[test]
    fn adapted_rmse_beats_naive_on_model_data() {
        let truth = ModelParams::new(0.133, 0.67, 0.53, 0.11).unwrap();
        let data = run_experiment(&design(), &truth, 7, 12, TiePolicy::Error).unwrap();
        let report = analyze(&data, &AnalysisConfig::default()).unwrap();
        assert!(report.adapted.rmse < report.naive.rmse, "{} vs {}", report.adapted.rmse, report.naive.rmse);
        assert_eq!(report.group_rows().len(), 7);
    }

    #[test]
    fn sign_tests() {
        let t = sign_test(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], |x| x > 0.0).unwrap();
        assert_eq!((t.k, t.n), (7, 7));
        assert_eq!(t.p, 0.015625);
    }
}
