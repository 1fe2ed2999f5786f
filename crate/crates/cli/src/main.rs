use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cwmv::fit::{GridSpec, PermutationScope, Pooling};
use cwmv::pipeline::{
    replay, run, AnalyzeConfig, Command, FitConfig, PipelineError, RandomizeConfig, RecoverConfig, RunOutput,
    ScenariosConfig, SimulateConfig,
};
use cwmv::simulate::{ModelParams, TiePolicy};

/// Confidence-weighted majority voting: scenarios, simulation, fitting and analysis.
#[derive(Debug, Parser)]
#[command(name = "cwmv", version)]
struct Cli {
    /// Random seed recorded in every output
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Scenario file (JSON); the built-in coin scenarios when omitted
    #[arg(long, global = true)]
    scenario_file: Option<PathBuf>,
    /// Dataset file (CSV, or JSON by extension)
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Search grid, e.g. "b:0:2:0.01,g:0:2:0.01,s:0:0.3:0.01"
    #[arg(long, global = true, value_parser = parse_grid)]
    grid: Option<GridSpec>,
    /// How balanced votes are resolved
    #[arg(long, global = true, value_parser = parse_tie_policy, default_value = "coin")]
    tie_policy: TiePolicy,
    /// Which confidences a permutation may exchange
    #[arg(long, global = true, value_parser = parse_scope, default_value = "global")]
    perm_scope: PermutationScope,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Args)]
struct ParamArgs {
    #[arg(long, default_value_t = 0.133)]
    sigma_i: f64,
    #[arg(long, default_value_t = 0.67)]
    beta: f64,
    #[arg(long, default_value_t = 0.53)]
    gamma: f64,
    #[arg(long, default_value_t = 0.11)]
    sigma_g: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<ModelParams, PipelineError> {
        ModelParams::new(self.sigma_i, self.beta, self.gamma, self.sigma_g)
            .map_err(|e| PipelineError::Validation(e.to_string()))
    }
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Build stimulus scenarios matching target ideal responses
    Scenarios {
        /// Target specification (JSON); the built-in targets when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Simulate groups under the noisy adapted-CWMV model
    Simulate {
        #[arg(long, default_value_t = 7)]
        n_groups: usize,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Fit every model variant to each group
    Fit,
    /// Accuracy, calibration and model agreement tables
    Analyze {
        /// Fixed adapted-CWMV beta (with --adapted-gamma)
        #[arg(long, requires = "adapted_gamma")]
        adapted_beta: Option<f64>,
        #[arg(long, requires = "adapted_beta")]
        adapted_gamma: Option<f64>,
    },
    /// Permutation null distribution of the mean group beta
    Randomize {
        #[arg(long, default_value_t = 1000)]
        n_perm: usize,
    },
    /// Parameter recovery from simulated experiments
    Recover {
        #[arg(long, default_value_t = 50)]
        n_groups: usize,
        #[arg(long, default_value_t = 20)]
        n_reps: usize,
        #[arg(long, value_parser = parse_pooling, default_value = "group-median")]
        pooling: Pooling,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Re-run a manifest and verify its outputs byte for byte
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    s.parse().map_err(|e: cwmv::fit::FitError| e.to_string())
}

fn parse_tie_policy(s: &str) -> Result<TiePolicy, String> {
    match s {
        "error" => Ok(TiePolicy::Error),
        "coin" => Ok(TiePolicy::Coin),
        other => Err(format!("unknown tie policy '{other}' (expected error or coin)")),
    }
}

fn parse_scope(s: &str) -> Result<PermutationScope, String> {
    s.parse()
}

fn parse_pooling(s: &str) -> Result<Pooling, String> {
    s.parse()
}

fn dataset(cli: &Cli) -> Result<PathBuf, PipelineError> {
    cli.dataset.clone().ok_or_else(|| PipelineError::Validation("--dataset is required".into()))
}

fn execute(cli: &Cli) -> Result<RunOutput, PipelineError> {
    let grid = cli.grid.unwrap_or_default();
    let cmd = match &cli.command {
        Sub::Replay { manifest } => return replay(manifest, &cli.out),
        Sub::Scenarios { spec } => Command::Scenarios(ScenariosConfig { spec: spec.clone(), seed: cli.seed }),
        Sub::Simulate { n_groups, params } => Command::Simulate(SimulateConfig {
            scenario_file: cli.scenario_file.clone(),
            params: params.params()?,
            n_groups: *n_groups,
            seed: cli.seed,
            tie_policy: cli.tie_policy,
        }),
        Sub::Fit => Command::Fit(FitConfig { dataset: dataset(cli)?, grid, seed: cli.seed }),
        Sub::Analyze { adapted_beta, adapted_gamma } => Command::Analyze(AnalyzeConfig {
            dataset: dataset(cli)?,
            grid,
            seed: cli.seed,
            tie_policy: cli.tie_policy,
            adapted: adapted_beta.zip(*adapted_gamma),
        }),
        Sub::Randomize { n_perm } => Command::Randomize(RandomizeConfig {
            dataset: dataset(cli)?,
            grid,
            n_perm: *n_perm,
            seed: cli.seed,
            scope: cli.perm_scope,
        }),
        Sub::Recover { n_groups, n_reps, pooling, params } => Command::Recover(RecoverConfig {
            scenario_file: cli.scenario_file.clone(),
            params: params.params()?,
            n_groups: *n_groups,
            n_reps: *n_reps,
            seed: cli.seed,
            grid,
            pooling: *pooling,
            tie_policy: cli.tie_policy,
        }),
    };
    run(&cmd, &cli.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(result) => {
            for line in &result.summary {
                println!("{line}");
            }
            println!("manifest: {}", result.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
