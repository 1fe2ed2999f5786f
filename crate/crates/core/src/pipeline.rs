//! Reproducible command pipelines. Each command reads its inputs, writes
//! its outputs into an output directory, and records a manifest from which
//! the run can be replayed and checked byte for byte.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{analyze, group_points, individual_points, level_summaries, AnalysisConfig, AnalysisError};
use crate::fit::{
    compare_variants, fit_by_group, parameter_recovery, predicted_full_scale, randomization_test, FitError, GridSpec,
    GroupFitSet, ModelVariant, PermutationScope, Pooling, RandomizationReport, RecoveryReport, VariantComparison,
};
use crate::ideal::IdealError;
use crate::io::{
    dataset_to_csv, dataset_to_json, fmt_float, fmt_prob, read_dataset, read_file, read_json, sha256_hex, table_to_csv,
    to_json_bytes, write_file, IoError,
};
use crate::scenario::{build_scenarios, default_scenario_spec, ScenarioFile, ScenarioSpec};
use crate::simulate::{run_experiment, Dataset, ExperimentDesign, ModelParams, SimError, TiePolicy};

pub const TOOL: &str = "cwmv";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_SUFFIX: &str = ".manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("replay mismatch: {0}")]
    Mismatch(String),
}

impl PipelineError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Infeasible(_) => 3,
            PipelineError::Io(_) => 4,
            PipelineError::Mismatch(_) => 1,
        }
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io { .. } => PipelineError::Io(e.to_string()),
            other => PipelineError::Validation(other.to_string()),
        }
    }
}

impl From<IdealError> for PipelineError {
    fn from(e: IdealError) -> Self {
        match e {
            IdealError::NoSequence { .. } => PipelineError::Infeasible(e.to_string()),
            other => PipelineError::Validation(other.to_string()),
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {
        $(impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Validation(e.to_string())
            }
        })*
    };
}
validation_from!(SimError, FitError, AnalysisError);

/// Hash of one input or output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance embedded in JSON outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenariosConfig {
    /// Target specification; the built-in coin scenarios when absent.
    pub spec: Option<PathBuf>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    /// Scenario file; built from the default targets when absent.
    pub scenario_file: Option<PathBuf>,
    pub params: ModelParams,
    pub n_groups: usize,
    pub seed: u64,
    pub tie_policy: TiePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub dataset: PathBuf,
    pub grid: GridSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub dataset: PathBuf,
    pub grid: GridSpec,
    pub seed: u64,
    pub tie_policy: TiePolicy,
    pub adapted: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizeConfig {
    pub dataset: PathBuf,
    pub grid: GridSpec,
    pub n_perm: usize,
    pub seed: u64,
    pub scope: PermutationScope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverConfig {
    pub scenario_file: Option<PathBuf>,
    pub params: ModelParams,
    pub n_groups: usize,
    pub n_reps: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub pooling: Pooling,
    pub tie_policy: TiePolicy,
}

/// A command with its full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum Command {
    Scenarios(ScenariosConfig),
    Simulate(SimulateConfig),
    Fit(FitConfig),
    Analyze(AnalyzeConfig),
    Randomize(RandomizeConfig),
    Recover(RecoverConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Scenarios(_) => "scenarios",
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Analyze(_) => "analyze",
            Command::Randomize(_) => "randomize",
            Command::Recover(_) => "recover",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Command::Scenarios(c) => c.seed,
            Command::Simulate(c) => c.seed,
            Command::Fit(c) => c.seed,
            Command::Analyze(c) => c.seed,
            Command::Randomize(c) => c.seed,
            Command::Recover(c) => c.seed,
        }
    }

    fn input_paths(&self) -> Vec<&Path> {
        match self {
            Command::Scenarios(c) => c.spec.as_deref().into_iter().collect(),
            Command::Simulate(c) => c.scenario_file.as_deref().into_iter().collect(),
            Command::Recover(c) => c.scenario_file.as_deref().into_iter().collect(),
            Command::Fit(c) => vec![&c.dataset],
            Command::Analyze(c) => vec![&c.dataset],
            Command::Randomize(c) => vec![&c.dataset],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<FileHash>,
}

/// Result of running a command: the files written and the manifest path.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
}

fn hash_inputs(cmd: &Command) -> Result<Vec<FileHash>, PipelineError> {
    cmd.input_paths()
        .into_iter()
        .map(|p| {
            if !p.exists() {
                return Err(PipelineError::Validation(format!("input file {} does not exist", p.display())));
            }
            Ok(FileHash { path: p.display().to_string(), sha256: sha256_hex(&read_file(p)?) })
        })
        .collect()
}

struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    summary: Vec<String>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new(), summary: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }
}

/// Runs `cmd`, writing outputs and `<command>.manifest.json` into `out`.
pub fn run(cmd: &Command, out: &Path) -> Result<RunOutput, PipelineError> {
    let inputs = hash_inputs(cmd)?;
    let meta = Meta {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: cmd.name().into(),
        seed: cmd.seed(),
        inputs: inputs.clone(),
    };
    let produced = match cmd {
        Command::Scenarios(c) => cmd_scenarios(c, &meta)?,
        Command::Simulate(c) => cmd_simulate(c, &meta)?,
        Command::Fit(c) => cmd_fit(c, &meta)?,
        Command::Analyze(c) => cmd_analyze(c, &meta)?,
        Command::Randomize(c) => cmd_randomize(c, &meta)?,
        Command::Recover(c) => cmd_recover(c, &meta)?,
    };
    let mut outputs = Vec::new();
    for (name, bytes) in &produced.files {
        write_file(&out.join(name), bytes)?;
        outputs.push(FileHash { path: name.clone(), sha256: sha256_hex(bytes) });
    }
    let manifest = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        command: cmd.clone(),
        seed: cmd.seed(),
        inputs,
        outputs,
    };
    let manifest_path = out.join(format!("{}{MANIFEST_SUFFIX}", cmd.name()));
    write_file(&manifest_path, &to_json_bytes(&manifest)?)?;
    info!("{} wrote {} file(s) to {}", cmd.name(), produced.files.len(), out.display());
    Ok(RunOutput { manifest_path, manifest, summary: produced.summary })
}

/// Re-runs a manifest's command into `out` and checks that inputs and
/// outputs hash exactly as recorded.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<RunOutput, PipelineError> {
    let recorded: Manifest = read_json(manifest_path)?;
    if recorded.version != VERSION {
        log::warn!("manifest written by version {}, replaying with {VERSION}", recorded.version);
    }
    let current = hash_inputs(&recorded.command)?;
    if current != recorded.inputs {
        return Err(PipelineError::Mismatch("input files changed since the manifest was written".into()));
    }
    let result = run(&recorded.command, out)?;
    for (want, got) in recorded.outputs.iter().zip(&result.manifest.outputs) {
        if want != got {
            return Err(PipelineError::Mismatch(format!("{} differs from the recorded output", got.path)));
        }
    }
    if recorded.outputs.len() != result.manifest.outputs.len() {
        return Err(PipelineError::Mismatch("different number of outputs".into()));
    }
    Ok(result)
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

fn json_with_meta<T: Serialize>(meta: &Meta, body: &T) -> Result<Vec<u8>, PipelineError> {
    Ok(to_json_bytes(&WithMeta { meta, body })?)
}

fn load_scenarios(path: Option<&Path>) -> Result<ScenarioFile, PipelineError> {
    match path {
        Some(p) => Ok(read_json(p)?),
        None => Ok(build_scenarios(&default_scenario_spec())?),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset, PipelineError> {
    let d = read_dataset(path)?;
    if d.is_empty() {
        return Err(PipelineError::Validation(format!("dataset {} has no trials", path.display())));
    }
    Ok(d)
}

#[derive(Serialize)]
struct ScenarioCheckRow {
    scenario: String,
    member: String,
    sequence: String,
    target_decision: String,
    target_confidence: String,
    achieved_decision: String,
    achieved_confidence: String,
}

fn cmd_scenarios(c: &ScenariosConfig, meta: &Meta) -> Result<Outputs, PipelineError> {
    let spec: ScenarioSpec = match &c.spec {
        Some(p) => read_json(p)?,
        None => default_scenario_spec(),
    };
    if spec.scenarios.is_empty() {
        return Err(PipelineError::Validation("scenario spec has no targets".into()));
    }
    let file = build_scenarios(&spec)?;
    let mut out = Outputs::new();
    let mut rows = Vec::new();
    let dec = |d: crate::aggregation::Decision| format!("{:+}", d.value());
    for s in &file.scenarios {
        let ideals = s.member_ideals(&file.model);
        for (m, (seq, ideal)) in s.sequences.iter().zip(&ideals).enumerate() {
            let target = &s.targets.members[m];
            rows.push(ScenarioCheckRow {
                scenario: s.id.clone(),
                member: ["A", "B", "C"][m].into(),
                sequence: seq.to_string(),
                target_decision: dec(target.decision),
                target_confidence: fmt_prob(target.p()),
                achieved_decision: dec(ideal.decision),
                achieved_confidence: fmt_prob(ideal.p()),
            });
        }
        let g = s.group_ideal(&file.model);
        let (td, tc) = s.targets.group.map_or((String::new(), String::new()), |t| (dec(t.decision), fmt_prob(t.p())));
        rows.push(ScenarioCheckRow {
            scenario: s.id.clone(),
            member: "G".into(),
            sequence: String::new(),
            target_decision: td,
            target_confidence: tc.clone(),
            achieved_decision: dec(g.decision),
            achieved_confidence: fmt_prob(g.p()),
        });
        out.summary.push(format!(
            "scenario {}: group target {} achieved {}",
            s.id,
            if tc.is_empty() { "-".into() } else { tc },
            fmt_prob(g.p())
        ));
    }
    out.add("scenarios.json", json_with_meta(meta, &file)?);
    out.add("scenarios_check.csv", table_to_csv(&rows, &[])?);
    Ok(out)
}

fn cmd_simulate(c: &SimulateConfig, _meta: &Meta) -> Result<Outputs, PipelineError> {
    if c.n_groups == 0 {
        return Err(PipelineError::Validation("n_groups must be at least 1".into()));
    }
    let file = load_scenarios(c.scenario_file.as_deref())?;
    let data = run_experiment(&ExperimentDesign::standard(&file), &c.params, c.n_groups, c.seed, c.tie_policy)?;
    let mut out = Outputs::new();
    out.summary.push(format!(
        "{} groups, {} trials, {} individual rows, {} group rows",
        c.n_groups,
        data.trials.len(),
        data.trials.len() * 3,
        data.trials.len()
    ));
    out.add("dataset.csv", dataset_to_csv(&data)?);
    out.add("dataset.json", dataset_to_json(&data)?);
    Ok(out)
}

#[derive(Serialize)]
struct FitRow {
    group_id: u32,
    variant: String,
    beta: String,
    gamma: String,
    sigma_g: String,
    sigma_i: String,
    log_likelihood: String,
    bic: String,
    aic: String,
    n_trials: usize,
    n_params: usize,
}

/// Per-group fits of every variant, with summed scores and comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub grid: GridSpec,
    pub variants: Vec<GroupFitSet>,
    pub comparison: VariantComparison,
}

fn cmd_fit(c: &FitConfig, meta: &Meta) -> Result<Outputs, PipelineError> {
    let data = load_dataset(&c.dataset)?;
    let variants = ModelVariant::ALL.iter().map(|&v| fit_by_group(&data, v, &c.grid)).collect::<Result<Vec<_>, _>>()?;
    let comparison = compare_variants(&variants);
    let mut rows = Vec::new();
    for set in &variants {
        for g in &set.groups {
            let f = &g.fit;
            rows.push(FitRow {
                group_id: g.group_id,
                variant: set.variant.to_string(),
                beta: fmt_float(f.params.beta),
                gamma: fmt_float(f.params.gamma),
                sigma_g: fmt_float(f.params.sigma_g),
                sigma_i: fmt_float(f.params.sigma_i),
                log_likelihood: fmt_float(f.log_likelihood),
                bic: fmt_float(f.bic),
                aic: fmt_float(f.aic),
                n_trials: f.n_trials,
                n_params: f.n_params,
            });
        }
    }
    let mut out = Outputs::new();
    for t in &comparison.totals {
        out.summary.push(format!(
            "{:<14} logL {:>12} BIC {:>12} AIC {:>12}",
            t.variant.name(),
            fmt_float(t.log_likelihood),
            fmt_float(t.bic),
            fmt_float(t.aic)
        ));
    }
    if let Some(l) = comparison.lrt_full_vs_beta_fixed_1 {
        out.summary.push(format!(
            "LRT full vs beta_fixed_1: chi2({}) = {}, p = {}",
            l.df,
            fmt_float(l.chi2),
            fmt_float(l.p)
        ));
    }
    let report = FitReport { grid: c.grid, variants, comparison };
    out.add("fit.json", json_with_meta(meta, &report)?);
    out.add("fit.csv", table_to_csv(&rows, &[])?);
    Ok(out)
}

#[derive(Serialize)]
struct GroupCsvRow {
    group: u32,
    real: String,
    cwmv: String,
    mv: String,
    intercept: String,
    slope: String,
    beta: String,
    gamma: String,
    sigma_g: String,
    raw_intercept: String,
}

#[derive(Serialize)]
struct PointRow {
    series: String,
    group_id: u32,
    member: String,
    trial: u32,
    x: String,
    y: String,
}

#[derive(Serialize)]
struct LevelRow {
    series: String,
    ideal: String,
    n: usize,
    mean: String,
    sem: String,
}

fn cmd_analyze(c: &AnalyzeConfig, meta: &Meta) -> Result<Outputs, PipelineError> {
    let data = load_dataset(&c.dataset)?;
    let config = AnalysisConfig { grid: c.grid, tie_policy: c.tie_policy, seed: c.seed, adapted: c.adapted };
    let report = analyze(&data, &config)?;
    let mut out = Outputs::new();
    let a = &report.accuracy;
    out.summary.push(format!(
        "accuracy %: real {:.1} (SEM {:.1}), CWMV {:.1} (SEM {:.1}), MV {:.1} (SEM {:.1})",
        a.real.mean, a.real.sem, a.cwmv.mean, a.cwmv.sem, a.mv.mean, a.mv.sem
    ));
    out.summary.push(format!(
        "RMSE naive {} adapted {} (beta {}, gamma {})",
        fmt_float(report.naive.rmse),
        fmt_float(report.adapted.rmse),
        fmt_float(report.adapted.beta),
        fmt_float(report.adapted.gamma)
    ));

    let group_rows: Vec<GroupCsvRow> = report
        .group_rows()
        .into_iter()
        .map(|r| GroupCsvRow {
            group: r.group,
            real: fmt_float(r.real),
            cwmv: fmt_float(r.cwmv),
            mv: fmt_float(r.mv),
            intercept: fmt_float(r.intercept),
            slope: fmt_float(r.slope),
            beta: fmt_float(r.beta),
            gamma: fmt_float(r.gamma),
            sigma_g: fmt_float(r.sigma_g),
            raw_intercept: fmt_float(r.raw_intercept),
        })
        .collect();

    let mut points = Vec::new();
    for ((g, m), pts) in individual_points(&data.trials) {
        let trials: Vec<u32> = data.trials.iter().filter(|t| t.group_id == g).map(|t| t.trial).collect();
        for ((x, y), trial) in pts.into_iter().zip(trials) {
            points.push(PointRow {
                series: "individual".into(),
                group_id: g,
                member: ["A", "B", "C"][m].into(),
                trial,
                x: fmt_prob(x),
                y: fmt_prob(y),
            });
        }
    }
    for (g, pts) in group_points(&data.trials) {
        let trials: Vec<u32> = data.trials.iter().filter(|t| t.group_id == g).map(|t| t.trial).collect();
        for ((x, y), trial) in pts.into_iter().zip(trials) {
            points.push(PointRow {
                series: "group".into(),
                group_id: g,
                member: "G".into(),
                trial,
                x: fmt_prob(x),
                y: fmt_prob(y),
            });
        }
    }
    let adapted = (report.adapted.beta, report.adapted.gamma);
    for (series, (b, gm)) in [("naive_cwmv", (1.0, 1.0)), ("adapted_cwmv", adapted)] {
        for t in &data.trials {
            points.push(PointRow {
                series: series.into(),
                group_id: t.group_id,
                member: "G".into(),
                trial: t.trial,
                x: fmt_prob(predicted_full_scale(t, b, gm)),
                y: fmt_prob(t.group.full_scale(t.truth)),
            });
        }
    }
    let levels: Vec<LevelRow> = level_summaries(&data, adapted)
        .into_iter()
        .map(|l| LevelRow {
            series: l.series,
            ideal: fmt_prob(l.ideal),
            n: l.n,
            mean: fmt_prob(l.mean),
            sem: fmt_float(l.sem),
        })
        .collect();

    out.add("analysis.json", json_with_meta(meta, &report)?);
    out.add("groups.csv", table_to_csv(&group_rows, &[])?);
    out.add("points.csv", table_to_csv(&points, &[])?);
    out.add("levels.csv", table_to_csv(&levels, &[])?);
    Ok(out)
}

#[derive(Serialize)]
struct PermutationRow {
    permutation: usize,
    beta: String,
}

fn cmd_randomize(c: &RandomizeConfig, meta: &Meta) -> Result<Outputs, PipelineError> {
    let data = load_dataset(&c.dataset)?;
    let report: RandomizationReport = randomization_test(&data.trials, c.n_perm, &c.grid, c.seed, c.scope)?;
    let rows: Vec<PermutationRow> = report
        .beta_samples
        .iter()
        .enumerate()
        .map(|(i, b)| PermutationRow { permutation: i, beta: fmt_float(*b) })
        .collect();
    let mut out = Outputs::new();
    out.summary.push(format!(
        "observed mean beta {}, permutation q95 {} over {} permutations ({} scope)",
        fmt_float(report.observed_beta),
        fmt_float(report.q95),
        report.n_perm,
        report.scope
    ));
    out.add("randomization.json", json_with_meta(meta, &report)?);
    out.add("randomization.csv", table_to_csv(&rows, &["permutation", "beta"])?);
    Ok(out)
}

#[derive(Serialize)]
struct RecoveryRow {
    replicate: usize,
    seed: u64,
    sigma_i: String,
    beta: String,
    gamma: String,
    sigma_g: String,
}

fn cmd_recover(c: &RecoverConfig, meta: &Meta) -> Result<Outputs, PipelineError> {
    if c.n_groups == 0 {
        return Err(PipelineError::Validation("n_groups must be at least 1".into()));
    }
    let file = load_scenarios(c.scenario_file.as_deref())?;
    let report: RecoveryReport = parameter_recovery(
        &c.params,
        &ExperimentDesign::standard(&file),
        c.n_groups,
        c.n_reps,
        c.seed,
        &c.grid,
        c.pooling,
        c.tie_policy,
    )?;
    let rows: Vec<RecoveryRow> = report
        .replicates
        .iter()
        .map(|r| RecoveryRow {
            replicate: r.replicate,
            seed: r.seed,
            sigma_i: fmt_float(r.sigma_i),
            beta: fmt_float(r.beta),
            gamma: fmt_float(r.gamma),
            sigma_g: fmt_float(r.sigma_g),
        })
        .collect();
    let mut out = Outputs::new();
    for s in &report.summaries {
        out.summary.push(format!(
            "{:<8} truth {} median {} bias {} sd {}",
            s.name,
            fmt_float(s.truth),
            fmt_float(s.median),
            fmt_float(s.bias),
            fmt_float(s.sd)
        ));
    }
    out.add("recovery.json", json_with_meta(meta, &report)?);
    out.add("recovery.csv", table_to_csv(&rows, &[])?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Validation(String::new()).exit_code(), 2);
        assert_eq!(PipelineError::Infeasible(String::new()).exit_code(), 3);
        assert_eq!(PipelineError::Io(String::new()).exit_code(), 4);
    }

    #[test]
    fn manifest_json_round_trip() {
        let cmd = Command::Fit(FitConfig { dataset: "d.csv".into(), grid: GridSpec::default(), seed: 3 });
        let m = Manifest {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: cmd,
            seed: 3,
            inputs: vec![],
            outputs: vec![FileHash { path: "fit.json".into(), sha256: "00".into() }],
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"command\":\"fit\""));
        assert_eq!(serde_json::from_str::<Manifest>(&json).unwrap(), m);
    }
}
