//! Command-line front end.
//!
//! Exit codes are uniform across subcommands: 0 for success (the formula
//! holds, the run is compliant, the selftest passes), 1 for a semantic
//! negative (formula fails, mitigation needed, estimate out of bounds,
//! selftest failure), 2 for usage, parse, or validation errors.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde_json::{json, Value};

use crate::formula::{format_rational, parse_formula, parse_rational, Formula};
use crate::mitigation::{plan_removals, Decision, KeepPolicy};
use crate::model::{ModelSpec, Path, WorldId};
use crate::monitor::{report_json, MonitorError, MonitorState, SessionConfig, Status, TraceEvent};
use crate::semantics::{
    check_path, check_state, sigma_completions_from, CountVector, Distribution, Evaluation,
};
use crate::simulator::{estimate_completion_probability, SimConfig, Sampling};

mod selftest;

#[derive(Debug, Parser)]
#[command(
    name = "ctlf",
    version,
    about = "Counting-logic model checking and distribution monitoring over output series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a formula at a world or on a path
    Check(CheckArgs),
    /// Stream a trace through the monitor, emitting one verdict per event
    Monitor(MonitorArgs),
    /// Compute a removal plan for an observed trace
    Mitigate(MitigateArgs),
    /// Estimate a completion probability by simulation and compare with the exact value
    Simulate(SimulateArgs),
    /// Run the built-in golden suite and evaluator cross-check
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Model JSON file
    #[arg(long)]
    model: PathBuf,
    /// Target distribution JSON file (needed for BBOX, TRI, DAG)
    #[arg(long)]
    target: Option<PathBuf>,
    /// Formula text, e.g. "BOX 1/2 M"
    #[arg(long)]
    formula: Option<String>,
    /// World in dotted notation, e.g. 4.7
    #[arg(long)]
    world: Option<String>,
    /// Path as comma-separated worlds, e.g. 1.1,2.2,3.4,4.7
    #[arg(long, value_delimiter = ',')]
    path: Option<Vec<String>>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Query JSON file ('-' for stdin) used when --formula is not given:
    /// {"world":"4.7","formula":"BOX 1/2 M"} or {"path":[...],"formula":"..."}
    query: Option<String>,
}

#[derive(Debug, Args)]
struct MonitorArgs {
    /// Session config JSON bundling model/target/epsilon/dataset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON file (alternative to --config)
    #[arg(long)]
    model: Option<PathBuf>,
    /// Target distribution JSON file
    #[arg(long)]
    target: Option<PathBuf>,
    /// Tolerance band as a rational, e.g. 1/10
    #[arg(long)]
    epsilon: Option<String>,
    /// Dataset JSON file with outcome counts for residual odds
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Trace file in JSON lines ('-' for stdin)
    trace: Option<String>,
}

#[derive(Debug, Args)]
struct MitigateArgs {
    /// Target distribution JSON file
    #[arg(long)]
    target: PathBuf,
    /// Which occurrences of an over-represented outcome to keep
    #[arg(long, value_enum, default_value_t = Policy::KeepEarliest)]
    policy: Policy,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Trace file in JSON lines ('-' for stdin)
    trace: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    KeepEarliest,
    KeepLatest,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Model JSON file
    #[arg(long)]
    model: PathBuf,
    /// Target distribution JSON file
    #[arg(long)]
    target: PathBuf,
    /// Prefix end world in dotted notation (its root path is the prefix)
    #[arg(long)]
    world: Option<String>,
    /// Prefix as comma-separated worlds
    #[arg(long, value_delimiter = ',')]
    path: Option<Vec<String>>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

/// Entry point for the `ctlf` binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Monitor(args) => cmd_monitor(args),
        Command::Mitigate(args) => cmd_mitigate(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Selftest(args) => Ok(selftest::run(args.format)),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("ctlf: {message}");
            2
        }
    }
}

fn read_file(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn read_input(source: &str) -> Result<String, String> {
    if source == "-" {
        let mut buf = String::new();
        io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| format!("stdin: {e}"))?;
        Ok(buf)
    } else {
        fs::read_to_string(source).map_err(|e| format!("{source}: {e}"))
    }
}

fn load_model(path: &PathBuf) -> Result<ModelSpec, String> {
    ModelSpec::from_json(&read_file(path)?).map_err(|e| e.to_string())
}

fn load_target(path: &PathBuf) -> Result<Distribution, String> {
    Distribution::from_json(&read_file(path)?).map_err(|e| e.to_string())
}

fn parse_world(text: &str) -> Result<WorldId, String> {
    text.parse::<WorldId>().map_err(|e| e.to_string())
}

fn parse_path(parts: &[String], spec: &ModelSpec) -> Result<Path, String> {
    let worlds = parts
        .iter()
        .map(|p| parse_world(p))
        .collect::<Result<Vec<_>, _>>()?;
    Path::from_worlds(worlds, spec).map_err(|e| e.to_string())
}

fn evaluation_json(ev: &Evaluation) -> Value {
    json!({
        "holds": ev.holds,
        "ratio": ev.ratio.as_ref().map(format_rational),
        "witness": ev.witness.as_ref().map(|p| {
            Value::Array(p.worlds().iter().map(|w| Value::String(w.to_string())).collect())
        }),
    })
}

fn cmd_check(args: CheckArgs) -> Result<i32, String> {
    let spec = load_model(&args.model)?;
    let sigma = args.target.as_ref().map(load_target).transpose()?;

    let (formula_text, world_arg, path_arg) = if let Some(formula) = &args.formula {
        (formula.clone(), args.world.clone(), args.path.clone())
    } else {
        let source = args
            .query
            .as_deref()
            .ok_or("provide --formula or a query file ('-' for stdin)")?;
        let raw: Value =
            serde_json::from_str(&read_input(source)?).map_err(|e| format!("query: {e}"))?;
        let formula = raw
            .get("formula")
            .and_then(Value::as_str)
            .ok_or("query needs a \"formula\" field")?
            .to_string();
        let world = raw
            .get("world")
            .and_then(Value::as_str)
            .map(str::to_string);
        let path = raw.get("path").and_then(Value::as_array).map(|items| {
            items
                .iter()
                .filter_map(Value::as_str)
                .map(str::to_string)
                .collect::<Vec<_>>()
        });
        (formula, world, path)
    };

    let formula = parse_formula(&formula_text).map_err(|e| e.to_string())?;
    let evaluation = match &formula {
        Formula::State(f) => {
            let world = match (&world_arg, &path_arg) {
                (Some(w), _) => parse_world(w)?,
                (None, Some(parts)) => parse_path(parts, &spec)?.end().clone(),
                (None, None) => return Err("state formulas need --world or --path".to_string()),
            };
            check_state(&world, f, &spec, sigma.as_ref()).map_err(|e| e.to_string())?
        }
        Formula::Path(f) => {
            let path = match (&path_arg, &world_arg) {
                (Some(parts), _) => parse_path(parts, &spec)?,
                // The root path of a world is its unique prefix.
                (None, Some(w)) => spec
                    .root_path(&parse_world(w)?)
                    .map_err(|e| e.to_string())?,
                (None, None) => return Err("path formulas need --path or --world".to_string()),
            };
            check_path(&path, f, &spec, sigma.as_ref()).map_err(|e| e.to_string())?
        }
    };

    match args.format {
        Format::Json => println!("{}", evaluation_json(&evaluation)),
        Format::Table => {
            println!("holds    {}", evaluation.holds);
            println!(
                "ratio    {}",
                evaluation
                    .ratio
                    .as_ref()
                    .map_or("-".to_string(), format_rational)
            );
            println!(
                "witness  {}",
                evaluation
                    .witness
                    .as_ref()
                    .map_or("-".to_string(), |p| p.to_string())
            );
        }
    }
    Ok(if evaluation.holds { 0 } else { 1 })
}

fn build_monitor(args: &MonitorArgs) -> Result<MonitorState, String> {
    if let Some(config) = &args.config {
        let mut session =
            SessionConfig::from_json(&read_file(config)?).map_err(|e| e.to_string())?;
        if let Some(epsilon) = &args.epsilon {
            session.epsilon = Some(epsilon.clone());
        }
        return session.build().map_err(|e| e.to_string());
    }
    let model = args
        .model
        .as_ref()
        .ok_or("provide --config or --model and --target")?;
    let target = args
        .target
        .as_ref()
        .ok_or("provide --target with --model")?;
    let spec = load_model(model)?;
    let target = load_target(target)?;
    let epsilon = match &args.epsilon {
        None => BigRational::from_integer(0.into()),
        Some(text) => parse_rational(text).map_err(|e| format!("epsilon: {e}"))?,
    };
    let dataset = args
        .dataset
        .as_ref()
        .map(|p| -> Result<CountVector, String> {
            let raw: BTreeMap<String, u64> = serde_json::from_str(&read_file(p)?)
                .map_err(|e| format!("dataset: {e}"))?;
            Ok(CountVector::from_pairs(raw.into_iter().collect::<Vec<_>>()))
        })
        .transpose()?;
    MonitorState::new(spec, target, epsilon, dataset).map_err(|e| e.to_string())
}

fn monitor_table_row(seq: u64, outcome: &str, report: &Value) -> String {
    let ratios = report["ratios"]
        .as_object()
        .map(|m| {
            m.iter()
                .map(|(k, v)| format!("{k}={}", v.as_str().unwrap_or("?")))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .unwrap_or_default();
    format!(
        "{seq:>4}  {outcome:<8} {:<10} q2={:<8} {ratios}",
        report["status"].as_str().unwrap_or("?"),
        report["q2"].as_str().unwrap_or("?"),
    )
}

fn cmd_monitor(args: MonitorArgs) -> Result<i32, String> {
    let mut state = build_monitor(&args)?;
    let source = args.trace.clone().unwrap_or_else(|| "-".to_string());
    let text = read_input(&source)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();

    let mut events = 0u64;
    let mut last_status: Option<Status> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let event: TraceEvent = serde_json::from_str(line).map_err(|e| {
            let _ = out.flush();
            format!("trace line {}: {e}", lineno + 1)
        })?;
        state = state.ingest(&event.outcome).map_err(|e| {
            let _ = out.flush();
            format!("trace line {}: {e}", lineno + 1)
        })?;
        let report = report_json(&state).map_err(|e: MonitorError| e.to_string())?;
        match args.format {
            Format::Json => writeln!(out, "{report}").map_err(|e| e.to_string())?,
            Format::Table => writeln!(out, "{}", monitor_table_row(event.seq, &event.outcome, &report))
                .map_err(|e| e.to_string())?,
        }
        events += 1;
        last_status = Some(state.q1_verdict().map_err(|e| e.to_string())?.status);
    }

    let (certificate, code) = match last_status {
        None => (json!({"certificate": "vacuous"}), 0),
        Some(Status::Compliant) => (
            json!({"certificate": "compliant", "observed": events}),
            0,
        ),
        Some(_) => {
            let plan = plan_removals(&state.observed(), state.target(), KeepPolicy::KeepEarliest)
                .map_err(|e| e.to_string())?;
            (
                json!({"certificate": "mitigation", "plan": plan.to_json_value()}),
                1,
            )
        }
    };
    match args.format {
        Format::Json => writeln!(out, "{certificate}").map_err(|e| e.to_string())?,
        Format::Table => {
            writeln!(out, "certificate: {certificate}").map_err(|e| e.to_string())?
        }
    }
    Ok(code)
}

fn cmd_mitigate(args: MitigateArgs) -> Result<i32, String> {
    let target = load_target(&args.target)?;
    let source = args.trace.clone().unwrap_or_else(|| "-".to_string());
    let text = read_input(&source)?;
    let mut observed = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let event: TraceEvent =
            serde_json::from_str(line).map_err(|e| format!("trace line {}: {e}", lineno + 1))?;
        observed.push(event.outcome);
    }
    let policy = match args.policy {
        Policy::KeepEarliest => KeepPolicy::KeepEarliest,
        Policy::KeepLatest => KeepPolicy::KeepLatest,
    };
    let plan = plan_removals(&observed, &target, policy).map_err(|e| e.to_string())?;
    match args.format {
        Format::Json => println!("{}", plan.to_json_value()),
        Format::Table => {
            println!("optimal size  {}", plan.optimal_size);
            println!(
                "keep          {}",
                plan.keep
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            );
            println!(
                "remove        {}",
                plan.remove
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            );
        }
    }
    Ok(if plan.remove.is_empty() { 0 } else { 1 })
}

fn cmd_simulate(args: SimulateArgs) -> Result<i32, String> {
    let spec = load_model(&args.model)?;
    let sigma = load_target(&args.target)?;
    let prefix = match (&args.path, &args.world) {
        (Some(parts), _) => parse_path(parts, &spec)?,
        (None, Some(w)) => spec
            .root_path(&parse_world(w)?)
            .map_err(|e| e.to_string())?,
        (None, None) => return Err("provide --world or --path for the prefix".to_string()),
    };
    let exact_num = sigma_completions_from(prefix.end(), &spec, &sigma).map_err(|e| e.to_string())?;
    let exact_den = spec.count_paths_from(prefix.end()).map_err(|e| e.to_string())?;
    let exact = BigRational::new(exact_num.into(), exact_den.into());

    let cfg = SimConfig::new(spec.clone(), Sampling::TreeUniform, args.trials, args.seed)
        .map_err(|e| e.to_string())?;
    let est = estimate_completion_probability(&prefix, &sigma, &cfg).map_err(|e| e.to_string())?;
    let exact_f = exact.to_f64().unwrap_or(f64::NAN);
    let pass = (est.estimate - exact_f).abs() <= est.ci95;

    let report = json!({
        "exact": format_rational(&exact),
        "estimate": est.estimate,
        "ci95": est.ci95,
        "trials": est.trials,
        "seed": args.seed,
        "pass": pass,
    });
    match args.format {
        Format::Json => println!("{report}"),
        Format::Table => {
            println!("exact     {}", format_rational(&exact));
            println!("estimate  {}", est.estimate);
            println!("ci95      {}", est.ci95);
            println!("trials    {}", est.trials);
            println!("seed      {}", args.seed);
            println!("pass      {pass}");
        }
    }
    Ok(if pass { 0 } else { 1 })
}

// Shared by selftest: decision map rendered compactly.
fn decisions_to_string(decisions: &BTreeMap<String, Decision>) -> String {
    decisions
        .iter()
        .map(|(p, d)| format!("{p}:{d:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}
