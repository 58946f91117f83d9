use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use titekit_core::conduct::{justify, parse_ndjson, TrialLog};
use titekit_core::patient::{AdaptivePrior, PendingData, PiecewiseWeights, WeightScheme};
use titekit_core::sim::{run_oc, AccrualModel, Scenario, SimDesign};
use titekit_core::{generate_table, render_table, Design, DesignParams, DosePosition, Engine, Error, TableFormat};

#[derive(Parser)]
#[command(name = "titekit", version, about = "Time-to-event keyboard dose finding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the decision table.
    Table(TableArgs),
    /// One dose decision from counts or per-patient follow-up.
    Decide(DecideArgs),
    /// Operating characteristics of a scenario.
    Simulate(SimulateArgs),
    /// Decision transcript of an NDJSON event log.
    Replay(ReplayArgs),
    /// Start the conduct service.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct DesignArgs {
    #[arg(long, default_value = "keyboard", value_parser = parse_design)]
    design: Design,
    #[arg(long, default_value_t = 0.3)]
    phi: f64,
    #[arg(long, default_value_t = 0.05)]
    delta1: f64,
    #[arg(long, default_value_t = 0.05)]
    delta2: f64,
    #[arg(long, default_value_t = 0.95)]
    eta: f64,
}

impl DesignArgs {
    fn params(&self) -> DesignParams<f64> {
        DesignParams { phi: self.phi, delta1: self.delta1, delta2: self.delta2, eta: self.eta, ..DesignParams::default() }
    }
}

fn parse_design(s: &str) -> Result<Design, String> {
    Design::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 3)]
    cohort: usize,
    #[arg(long, default_value_t = 12)]
    max_n: usize,
    #[arg(long, default_value = "markdown", value_parser = parse_table_format)]
    format: TableFormat,
}

fn parse_table_format(s: &str) -> Result<TableFormat, String> {
    TableFormat::from_str(s).map_err(|e| e.to_string())
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum OutFormat {
    Text,
    Json,
}

#[derive(Args)]
struct DecideArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Patients treated at the dose.
    #[arg(long)]
    n: usize,
    /// Observed DLTs.
    #[arg(long)]
    y: usize,
    /// Patients still within the assessment window.
    #[arg(long)]
    pending: Option<usize>,
    /// Effective number of non-DLT patients.
    #[arg(long = "m-eff")]
    m_eff: Option<f64>,
    /// Follow-up of each pending patient, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "m_eff")]
    followups: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3.0)]
    tau: f64,
    #[arg(long, default_value_t = 2)]
    min_complete: usize,
    /// The dose is the lowest non-eliminated one.
    #[arg(long)]
    at_lowest: bool,
    /// The dose is the highest one.
    #[arg(long)]
    at_highest: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: OutFormat,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    design: DesignArgs,
    /// uniform, adaptive or piecewise:EARLY,MIDDLE,LATE
    #[arg(long, default_value = "uniform")]
    weights: String,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    /// Overridden by TITEKIT_SEED when set.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Override the scenario's accrual model.
    #[arg(long, value_parser = ["deterministic", "exponential"])]
    accrual: Option<String>,
    #[arg(long, value_parser = ["text", "json", "csv"], default_value = "text")]
    format: String,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Replay under another design than the one recorded.
    #[arg(long, value_parser = parse_design)]
    design: Option<Design>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutFormat,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8420)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "./trials")]
    data_dir: PathBuf,
}

enum Failure {
    User(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric(_) => Failure::Internal(e.into()),
            _ => Failure::User(e.into()),
        }
    }
}

type Outcome = Result<String, Failure>;

fn user(e: impl Into<anyhow::Error>) -> Failure {
    Failure::User(e.into())
}

fn round(x: f64, dp: i32) -> f64 {
    let s = 10f64.powi(dp);
    (x * s).round() / s
}

fn cmd_table(a: &TableArgs) -> Outcome {
    let params = DesignParams { cohort_size: a.cohort, max_n: a.max_n, ..a.design.params() };
    let engine = Engine::new(a.design.design, params)?;
    let rows = generate_table(&engine)?;
    Ok(render_table(&rows, a.format)?)
}

#[derive(Serialize)]
struct DecideOut {
    design: String,
    action: String,
    label: &'static str,
    raw_action: String,
    n: usize,
    y: usize,
    pending: usize,
    m_eff: f64,
    strongest_key: Option<usize>,
    key_interval: Option<(f64, f64)>,
    target_key: usize,
    margin: Option<f64>,
    overdose_prob: f64,
    eliminate: bool,
    table_row: Option<String>,
}

fn cmd_decide(a: &DecideArgs) -> Outcome {
    let params = DesignParams { tau: a.tau, min_complete_for_escalation: a.min_complete, ..a.design.params() };
    let engine = Engine::new(a.design.design, params)?;
    if a.y > a.n {
        return Err(user(anyhow!("--y {} exceeds --n {}", a.y, a.n)));
    }
    let pending = match (&a.followups, a.pending) {
        (Some(f), Some(c)) if f.len() != c => {
            return Err(user(anyhow!("--pending {c} does not match {} follow-up values", f.len())))
        }
        (Some(f), _) => f.len(),
        (None, Some(c)) => c,
        (None, None) => 0,
    };
    if a.y + pending > a.n {
        return Err(user(anyhow!("y + pending = {} exceeds n = {}", a.y + pending, a.n)));
    }
    let completed = a.n - a.y - pending;
    let data = match (&a.followups, a.m_eff) {
        (Some(f), _) => {
            if f.iter().any(|u| !(*u >= 0.0 && *u <= a.tau)) {
                return Err(user(anyhow!("follow-up values must lie in [0, tau = {}]", a.tau)));
            }
            PendingData::new(a.y, completed, f.iter().map(|u| u / a.tau).collect())?
        }
        (None, Some(m)) => {
            let lo = completed as f64;
            let ok = if pending == 0 { (m - lo).abs() < 1e-9 } else { m > lo - 1e-9 && m <= lo + pending as f64 + 1e-9 };
            if !ok {
                return Err(user(anyhow!(
                    "--m-eff {m} inconsistent with {completed} completed and {pending} pending patients"
                )));
            }
            let w = if pending == 0 { 0.0 } else { ((m - lo) / pending as f64).clamp(0.0, 1.0) };
            PendingData::new(a.y, completed, vec![w; pending])?
        }
        (None, None) if pending > 0 => {
            return Err(user(anyhow!("--m-eff or --followups is required when patients are pending")))
        }
        (None, None) => PendingData::new(a.y, completed, vec![])?,
    };
    let eff = data.effective();
    let pos = DosePosition { at_lowest: a.at_lowest, at_highest: a.at_highest };
    let d = engine.decide(&data, pos)?;
    let row = justify(&engine, eff.n, eff.y, eff.pending, eff.m_eff).ok();
    let out = DecideOut {
        design: engine.design.name().to_string(),
        action: serde_json::to_value(d.action).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        label: d.action.label(),
        raw_action: serde_json::to_value(d.raw_action).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
        n: eff.n,
        y: eff.y,
        pending: eff.pending,
        m_eff: round(eff.m_eff, 4),
        strongest_key: d.strongest_key.map(|k| k + 1),
        key_interval: d.strongest_key.map(|k| {
            let (lo, hi) = engine.keyboard.keys[k];
            (round(lo, 4), round(hi, 4))
        }),
        target_key: engine.keyboard.target_index + 1,
        margin: d.margin.map(|m| round(m, 4)),
        overdose_prob: round(d.overdose_prob, 4),
        eliminate: eff.n > 0 && d.overdose_prob > params.eta,
        table_row: row.map(|r| r.text),
    };
    if a.format == OutFormat::Json {
        return Ok(serde_json::to_string_pretty(&out).map_err(|e| Failure::Internal(e.into()))? + "\n");
    }
    let mut s = format!("{}\n", out.label);
    s += &format!("design         {}\n", out.design);
    s += &format!("data           n={} y={} c={} m={:.4}\n", out.n, out.y, out.pending, out.m_eff);
    match (out.strongest_key, out.key_interval) {
        (Some(k), Some((lo, hi))) => {
            s += &format!("strongest key  {k} ({lo:.4}, {hi:.4}], target key {}\n", out.target_key)
        }
        _ => s += "strongest key  n/a\n",
    }
    if let Some(m) = out.margin {
        s += &format!("margin         {m:.4}\n");
    }
    s += &format!(
        "elimination    Pr(p > {:.4}) = {:.4} {} {:.4}{}\n",
        params.phi,
        out.overdose_prob,
        if out.eliminate { ">" } else { "<=" },
        params.eta,
        if out.eliminate { ", eliminate" } else { "" }
    );
    if let Some(t) = &out.table_row {
        s += &format!("table row      {t}\n");
    }
    Ok(s)
}

fn parse_weights(s: &str) -> Result<WeightScheme<f64>, Failure> {
    match s {
        "uniform" => Ok(WeightScheme::Uniform),
        "adaptive" => Ok(WeightScheme::Adaptive(AdaptivePrior::default())),
        _ => {
            let v = s
                .strip_prefix("piecewise:")
                .ok_or_else(|| user(anyhow!("unknown weight scheme {s:?}; use uniform, adaptive or piecewise:E,M,L")))?;
            let parts: Vec<f64> = v
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| user(anyhow!("piecewise weights: {e}")))?;
            let [e, m, l] = parts[..] else { return Err(user(anyhow!("piecewise needs three values"))) };
            Ok(WeightScheme::Piecewise(PiecewiseWeights::new(e, m, l)?))
        }
    }
}

fn seed_from(flag: u64, env: Option<String>) -> Result<u64, Failure> {
    match env {
        Some(v) => v.trim().parse().map_err(|_| user(anyhow!("TITEKIT_SEED={v:?} is not an unsigned integer"))),
        None => Ok(flag),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.scenario).with_context(|| format!("reading {}", a.scenario.display())).map_err(user)?;
    let mut scenario: Scenario = serde_json::from_str(&text).map_err(|e| user(anyhow!("{}: {e}", a.scenario.display())))?;
    match a.accrual.as_deref() {
        Some("deterministic") => scenario.accrual.model = AccrualModel::Deterministic,
        Some("exponential") => scenario.accrual.model = AccrualModel::Exponential,
        _ => {}
    }
    let seed = seed_from(a.seed, std::env::var("TITEKIT_SEED").ok())?;
    if a.reps == 0 {
        return Err(user(anyhow!("--reps must be positive")));
    }
    let design = SimDesign::new(a.design.design, a.design.params(), parse_weights(&a.weights)?);
    let oc = run_oc(&scenario, &design, a.reps, seed)?;
    match a.format.as_str() {
        "json" => Ok(serde_json::to_string_pretty(&oc).map_err(|e| Failure::Internal(e.into()))? + "\n"),
        "csv" => Ok(oc.to_csv()),
        _ => {
            let row = |name: &str, v: &[f64]| {
                let cells: Vec<String> = v.iter().map(|x| format!("{x:>7.1}")).collect();
                format!("{name:<14}{}\n", cells.join(""))
            };
            let mut s = format!(
                "{} | {} replicates | seed {} | {:?} accrual | true MTD dose {}\n",
                oc.design, oc.replicates, oc.master_seed, oc.accrual_model, oc.true_mtd
            );
            let doses: Vec<String> = (1..=oc.tox_probs.len()).map(|d| format!("{d:>7}")).collect();
            s += &format!("{:<14}{}\n", "dose", doses.join(""));
            s += &row("p_true", &oc.tox_probs.iter().map(|p| p * 100.0).collect::<Vec<_>>());
            s += &row("selection %", &oc.selection_pct);
            s += &row("allocation %", &oc.allocation_pct);
            s += &row("patients", &oc.mean_patients);
            s += &row("DLTs", &oc.mean_dlts);
            s += &format!("duration      {:.2} months\n", oc.mean_duration);
            s += &format!("early stop    {:.2} %\n", oc.stop_pct);
            s += &format!("poor alloc    {:.2} %\n", oc.poor_allocation_pct);
            s += &format!("overdose      {:.2} % (at least half: {:.2} %)\n", oc.overdose_pct, oc.overdose_inclusive_pct);
            Ok(s)
        }
    }
}

fn cmd_replay(a: &ReplayArgs) -> Outcome {
    let text = std::fs::read_to_string(&a.log).with_context(|| format!("reading {}", a.log.display())).map_err(user)?;
    let events = parse_ndjson(&text).map_err(|(line, e)| user(anyhow!("line {line}: {e}")))?;
    if events.is_empty() {
        return Ok(if a.format == OutFormat::Json { "{\"entries\":[],\"mtd\":null}\n".into() } else { "no decisions\n".into() });
    }
    let lines: Vec<usize> =
        text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).map(|(i, _)| i + 1).collect();
    let mut log = TrialLog::from_events(events).map_err(|(i, e)| user(anyhow!("line {}: {e}", lines[i])))?;
    if let Some(d) = a.design {
        log = log.with_design(d)?;
    }
    let t = log.transcript()?;
    if a.format == OutFormat::Json {
        return Ok(serde_json::to_string_pretty(&t).map_err(|e| Failure::Internal(e.into()))? + "\n");
    }
    Ok(t.render())
}

fn cmd_serve(a: &ServeArgs) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().map_err(|e| user(anyhow!("bad address: {e}")))?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Internal(e.into()))?;
    rt.block_on(titekit_service::serve(addr, a.data_dir.clone())).map_err(|e| Failure::Internal(anyhow!(e)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Table(a) => cmd_table(a),
        Command::Decide(a) => cmd_decide(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Serve(a) => {
            tracing_subscriber::fmt().with_writer(std::io::stderr).init();
            cmd_serve(a).map(|_| String::new())
        }
    };
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::User(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}
