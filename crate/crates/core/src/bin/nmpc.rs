//! Command-line front end: validate graphs, simulate models, calibrate from
//! records and predict forward.
//!
//! Exit codes: 0 on success, 1 on any input or validation failure, 2 when a
//! calibration misses its target error or a prediction step fails to
//! converge. Outputs are still written in the exit-2 case.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nmpc::calibration::{calibrate_restarts, CalibrationResult};
use nmpc::graph::{validate_graph, NodeId};
use nmpc::io::{
    check_known_columns, check_observed_columns, load_config, load_records, parse_graph, parse_model,
    parse_unchecked, serialize_model, write_records, Settings,
};
use nmpc::network::{Model, Trajectory};
use nmpc::predictor::predict;
use nmpc::simulate::{observed_records, simulate_model};

#[derive(Parser)]
#[command(name = "nmpc", version, about = "Monotone network models: calibrate and predict")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a graph or model file against the well-formedness rules.
    Validate { file: PathBuf },
    /// Run a model forward over the grid of an exogenous record file.
    Simulate(SimulateArgs),
    /// Fit a model's constants to a record file.
    Calibrate(CalibrateArgs),
    /// Predict parameters beyond the end of a history record file.
    Predict(PredictArgs),
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    exogenous: PathBuf,
    /// Simulate only the first N grid points.
    #[arg(long)]
    horizon: Option<usize>,
    /// Starting value of an integrative output, as `name=value`.
    #[arg(long = "initial", value_parser = parse_assignment)]
    initial: Vec<(String, f64)>,
    /// Output CSV; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    graph: PathBuf,
    records: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; falls back to the config file, then `NMPC_SEED`, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Independent seeded runs; the lowest error wins.
    #[arg(long)]
    restarts: Option<usize>,
    /// Model file to write.
    #[arg(short, long)]
    output: PathBuf,
    /// JSON report file; standard output when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    model: PathBuf,
    history: PathBuf,
    /// Future values of pure-input parameters; they are otherwise held at
    /// their last recorded value.
    #[arg(long)]
    exogenous: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    /// Output CSV; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn parse_assignment(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected `name=value`")?;
    let v: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    Ok((name.trim().to_string(), v))
}

enum Outcome {
    Done,
    Missed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Validate { file } => validate(&file),
        Command::Simulate(a) => simulate(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Predict(a) => run_predict(a),
    };
    match run {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Missed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<Model> {
    parse_model(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn records(path: &Path) -> Result<Trajectory> {
    load_records(path).with_context(|| format!("in {}", path.display()))
}

fn settings(path: Option<&Path>) -> Result<Settings> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("in {}", p.display())),
        None => Ok(Settings::default()),
    }
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match output {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn validate(file: &Path) -> Result<Outcome> {
    let graph = parse_unchecked(&read(file)?).with_context(|| format!("in {}", file.display()))?;
    let report = validate_graph(&graph);
    if report.is_ok() {
        println!("{}: well formed", file.display());
        return Ok(Outcome::Done);
    }
    for v in &report.violations {
        println!("{}: {}", file.display(), v);
    }
    bail!("{} violation(s)", report.violations.len())
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let mut exogenous = records(&a.exogenous)?;
    check_known_columns(model.graph(), &exogenous, false)?;
    if let Some(n) = a.horizon {
        if n > exogenous.len() {
            bail!("horizon {n} exceeds the {} exogenous rows", exogenous.len());
        }
        exogenous = truncate(&exogenous, n)?;
    }
    let mut initial = BTreeMap::new();
    for (name, v) in a.initial {
        if model.graph().parameter(&NodeId::new(name.as_str())).is_none() {
            bail!("--initial names `{name}`, which is not a parameter");
        }
        initial.insert(NodeId::new(name), v);
    }
    let traj = simulate_model(&model, &exogenous, &initial)?;
    let out = observed_records(model.graph(), &traj)?;
    let names: Vec<NodeId> = out.names().cloned().collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &out, &names, &[])?;
    emit(a.output.as_deref(), &buf)?;
    Ok(Outcome::Done)
}

fn truncate(t: &Trajectory, n: usize) -> Result<Trajectory> {
    let grid = nmpc::network::TimeGrid::new(t.grid.points()[..n].to_vec())?;
    let mut out = Trajectory::new(grid);
    for (name, s) in t.columns() {
        out.insert(name.clone(), s[..n].to_vec())?;
    }
    Ok(out)
}

#[derive(Serialize)]
struct Report<'a> {
    epsilon_hat: f64,
    target_error: f64,
    relevant: bool,
    per_parameter_errors: Vec<ParameterError<'a>>,
    cycles_used: usize,
    record_count: usize,
    constant_count: usize,
    determinacy_ok: bool,
    skipped: Vec<&'a str>,
    seed: u64,
}

#[derive(Serialize)]
struct ParameterError<'a> {
    parameter: &'a str,
    error: f64,
}

impl<'a> From<&'a CalibrationResult> for Report<'a> {
    fn from(r: &'a CalibrationResult) -> Self {
        Report {
            epsilon_hat: r.epsilon_hat,
            target_error: r.target_error,
            relevant: r.relevant,
            per_parameter_errors: r
                .per_parameter_errors
                .iter()
                .map(|(n, e)| ParameterError {
                    parameter: n.as_str(),
                    error: *e,
                })
                .collect(),
            cycles_used: r.cycles_used,
            record_count: r.record_count,
            constant_count: r.constant_count,
            determinacy_ok: r.determinacy_ok,
            skipped: r.skipped.iter().map(|c| c.as_str()).collect(),
            seed: r.seed,
        }
    }
}

fn seed_from(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var("NMPC_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("NMPC_SEED=`{v}` is not a natural number")),
        Err(_) => Ok(0),
    }
}

fn calibrate(a: CalibrateArgs) -> Result<Outcome> {
    let graph = parse_graph(&read(&a.graph)?).with_context(|| format!("in {}", a.graph.display()))?;
    validate_graph(&graph).into_result()?;
    let recs = records(&a.records)?;
    check_observed_columns(&graph, &recs)?;
    let s = settings(a.config.as_deref())?;
    let mut config = s.calibration;
    config.seed = seed_from(a.seed, s.seed)?;
    let restarts = a.restarts.or(s.restarts).unwrap_or(1);
    if restarts == 0 {
        bail!("--restarts must be at least 1");
    }

    let result = calibrate_restarts(&graph, &recs, &config, restarts)?;
    fs::write(&a.output, serialize_model(&result.model))
        .with_context(|| format!("writing {}", a.output.display()))?;
    let mut json = serde_json::to_string_pretty(&Report::from(&result))?;
    json.push('\n');
    emit(a.report.as_deref(), json.as_bytes())?;
    if !result.relevant {
        eprintln!(
            "calibration error {} exceeds the target {}",
            result.epsilon_hat, result.target_error
        );
        return Ok(Outcome::Missed);
    }
    Ok(Outcome::Done)
}

fn run_predict(a: PredictArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let history = records(&a.history)?;
    check_observed_columns(model.graph(), &history)?;
    let exogenous = a.exogenous.as_deref().map(records).transpose()?;
    if let Some(ex) = &exogenous {
        check_known_columns(model.graph(), ex, false)?;
    }
    let mut config = settings(a.config.as_deref())?.predict;
    if let Some(h) = a.horizon {
        config.horizon = h;
    }
    if let Some(s) = a.step {
        config.step = s;
    }

    let pred = predict(&model, &history, exogenous.as_ref(), &config)?;
    let names: Vec<NodeId> = model
        .graph()
        .parameters
        .iter()
        .filter(|p| p.observed)
        .map(|p| p.node.clone())
        .collect();
    let fallback: Vec<String> = pred
        .diagnostics
        .iter()
        .map(|d| u8::from(d.used_fallback).to_string())
        .collect();
    let mut buf = Vec::new();
    write_records(&mut buf, &pred.trajectories, &names, &[("fallback", fallback)])?;
    emit(a.output.as_deref(), &buf)?;
    if !pred.converged() {
        let bad = pred.diagnostics.iter().filter(|d| !d.converged).count();
        eprintln!("{bad} prediction step(s) did not converge");
        return Ok(Outcome::Missed);
    }
    Ok(Outcome::Done)
}
