//! The `bayes-arena` command line.
//!
//! Every subcommand is a deterministic function of its flags, input files
//! and seed, so two runs with the same arguments write identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bayes_arena::experiments::{fmt_sig, initial_snapshot, joint_table, sweep_skill, sweep_target, SweepGrid};
use bayes_arena::learning::{evaluate, extract_records, fit, load_log};
use bayes_arena::model::{DecisionModel, ModelParams};
use bayes_arena::sim::{run_episode, BotMode, BotPolicy, DruidPolicy, Scenario, ScriptedRandomPolicy};
use bayes_arena::{LearnError, ModelError, SimError};
use bayes_arena_service::{ServeConfig, ServeError};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("{path}: {source}")]
    IoFailure { path: PathBuf, source: std::io::Error },
    #[error("no decision records")]
    NoData,
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error(transparent)]
    Serve(#[from] ServeError),
    #[error("{0}")]
    Runtime(String),
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::MalformedLog(m) => CliError::MalformedLog(m),
            SimError::BadScenario(m) => CliError::BadConfig(m),
            other => CliError::BadConfig(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::BadConfig(e.to_string())
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::NoData => CliError::NoData,
            LearnError::MalformedLog(m) => CliError::MalformedLog(m),
            LearnError::Sim(s) => s.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bayes-arena",
    version,
    about = "Bayesian target and skill selection for a PVE druid"
)]
pub struct Cli {
    /// Directory searched for scenario names other than A and B.
    #[arg(long, global = true, env = "BAYES_ARENA_CONFIG")]
    pub config_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// P(T) for every character over a grid of e_id values.
    SweepTarget(SweepArgs),
    /// P(S) for every skill over a grid of e_id values.
    SweepSkill(SweepArgs),
    /// Natural-log joint P(T, S) at one parameter setting.
    JointTable(JointArgs),
    /// Plays one episode and writes its log.
    Simulate(SimulateArgs),
    /// Fits a model to episode logs.
    Train(TrainArgs),
    /// Scores a model against episode logs.
    Eval(EvalArgs),
    /// Hosts the session API and, optionally, the play-ui.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON file of model parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub e_ally: Option<f64>,
    #[arg(long)]
    pub prev_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// A, B, a scenario name or a scenario file.
    #[arg(long, default_value = "A")]
    pub setup: String,
    /// start:stop:step
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: SweepGrid,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JointArgs {
    #[arg(long, default_value = "A")]
    pub setup: String,
    #[arg(long, default_value_t = 0.9)]
    pub e_id: f64,
    #[arg(long, default_value_t = 0.6)]
    pub e_ally: f64,
    #[arg(long, default_value_t = 2.0)]
    pub prev_weight: f64,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Bot,
    BotSample,
    ScriptedRandom,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "A")]
    pub setup: String,
    #[arg(long, value_enum, default_value_t = PolicyArg::Bot)]
    pub policy: PolicyArg,
    #[arg(long, default_value_t = 200)]
    pub ticks: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub log_out: PathBuf,
    /// Trained model file for the bot policies.
    #[arg(long, conflicts_with = "params")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub params: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, num_args = 0..)]
    pub logs: Vec<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub pseudocount: f64,
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, num_args = 0..)]
    pub logs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Defaults to the configuration directory.
    #[arg(long)]
    pub scenario_dir: Option<PathBuf>,
}

/// Runs one parsed command, writing its report to `stdout`.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let dir = cli.config_dir.as_deref();
    match cli.command {
        Command::SweepTarget(a) => {
            let snap = initial_snapshot(&scenario(&a.setup, dir)?)?;
            let csv = sweep_target(&snap, &a.grid, &a.model.load()?)?;
            emit(&csv, a.out.as_deref(), stdout)
        }
        Command::SweepSkill(a) => {
            let snap = initial_snapshot(&scenario(&a.setup, dir)?)?;
            let csv = sweep_skill(&snap, &a.grid, &a.model.load()?)?;
            emit(&csv, a.out.as_deref(), stdout)
        }
        Command::JointTable(a) => {
            let params = load_params(a.params.as_deref())?
                .with_e_id(a.e_id)
                .with_e_ally(a.e_ally)
                .with_prev_weight(a.prev_weight);
            let snap = initial_snapshot(&scenario(&a.setup, dir)?)?;
            emit(&joint_table(&snap, &params)?, a.out.as_deref(), stdout)
        }
        Command::Simulate(a) => simulate(&a, dir, stdout),
        Command::Train(a) => train(&a, stdout),
        Command::Eval(a) => eval(&a, stdout),
        Command::Serve(a) => {
            let config = ServeConfig {
                addr: (a.host, a.port).into(),
                static_dir: a.static_dir,
                scenario_dir: a.scenario_dir.or(cli.config_dir),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(stdout, "listening on http://{}", config.addr).map_err(stdout_err)?;
            rt.block_on(bayes_arena_service::serve(config))?;
            Ok(())
        }
    }
}

impl ModelArgs {
    fn load(&self) -> Result<ModelParams, CliError> {
        let mut p = load_params(self.params.as_deref())?;
        if let Some(e) = self.e_ally {
            p = p.with_e_ally(e);
        }
        if let Some(w) = self.prev_weight {
            p = p.with_prev_weight(w);
        }
        p.validate()?;
        Ok(p)
    }
}

fn scenario(setup: &str, dir: Option<&Path>) -> Result<Scenario, CliError> {
    Ok(Scenario::resolve_in(setup, dir)?)
}

fn load_params(path: Option<&Path>) -> Result<ModelParams, CliError> {
    let Some(path) = path else {
        return Ok(ModelParams::default());
    };
    let text = read(path)?;
    let p: ModelParams =
        serde_json::from_str(&text).map_err(|e| CliError::BadConfig(format!("{}: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::IoFailure {
        path: path.to_path_buf(),
        source,
    })
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::IoFailure {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => write(path, text),
        None => stdout.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn load_model(path: &Path) -> Result<DecisionModel, CliError> {
    Ok(DecisionModel::from_json(&read(path)?)?)
}

fn simulate(a: &SimulateArgs, dir: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scenario = scenario(&a.setup, dir)?;
    let n = scenario.roster.len();
    let model = || -> Result<DecisionModel, CliError> {
        let m = match &a.model {
            Some(path) => load_model(path)?,
            None => DecisionModel::from_params(&load_params(a.params.as_deref())?, n)?,
        };
        if m.roster_size != n {
            return Err(CliError::BadConfig(format!(
                "model is for {} characters, scenario `{}` has {n}",
                m.roster_size, scenario.name
            )));
        }
        Ok(m)
    };
    let mut policy: Box<dyn DruidPolicy> = match a.policy {
        PolicyArg::Bot => Box::new(BotPolicy::new(model()?, BotMode::Argmax, a.seed)),
        PolicyArg::BotSample => Box::new(BotPolicy::new(model()?, BotMode::Sample, a.seed)),
        PolicyArg::ScriptedRandom => Box::new(ScriptedRandomPolicy::new(a.seed)),
    };
    let log = run_episode(&scenario, policy.as_mut(), a.ticks, a.seed)?;
    write(&a.log_out, &log.to_jsonl())?;
    let outcome = log.end.as_ref().map(|e| e.outcome);
    let outcome = serde_json::to_value(outcome).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(stdout, "outcome: {}", outcome.as_str().unwrap_or("none")).map_err(stdout_err)?;
    writeln!(stdout, "decisions: {}", log.records.len()).map_err(stdout_err)
}

fn train(a: &TrainArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if a.logs.is_empty() {
        return Err(CliError::NoData);
    }
    let mut records = Vec::new();
    for path in &a.logs {
        records.extend(extract_records(&load_log(path)?)?);
    }
    let (model, report) = fit(&records, a.pseudocount)?;
    write(&a.model_out, &model.to_json())?;
    let report = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(stdout, "{report}").map_err(stdout_err)
}

fn eval(a: &EvalArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let mut records = Vec::new();
    for path in &a.logs {
        let log = load_log(path)?;
        let n = log.header.scenario.roster.len();
        if n != model.roster_size {
            return Err(CliError::BadConfig(format!(
                "{} has {n} characters, the model was built for {}",
                path.display(),
                model.roster_size
            )));
        }
        records.extend(extract_records(&log)?);
    }
    let r = evaluate(&model, &records)?;
    let lines = [
        ("records", r.records.to_string()),
        ("top1", fmt_sig(r.top1)),
        ("top3", fmt_sig(r.top3)),
        ("log_loss", fmt_sig(r.log_loss)),
        ("uniform_baseline", fmt_sig(r.uniform_baseline)),
    ];
    for (k, v) in lines {
        writeln!(stdout, "{k}: {v}").map_err(stdout_err)?;
    }
    Ok(())
}
