//! The `bayesdoe` command line: campaign files on disk, one verb per step of
//! the ask/tell loop.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use bayesdoe::io::{
    load_campaign, load_csv, load_problem, save_campaign, write_csv, write_points, write_trace, OutOfBounds,
};
use bayesdoe::{
    ask_with, fit_quadratic_to_dataset, init_campaign, observed_pareto, recommend, simulate_loop, suggest, tell, BatchStrategy,
    CampaignConfig, CampaignState, Direction, Error, OutputColumn, RecommendOutcome, Recommendation, Sense,
    SimulationTrace,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

/// Environment variable naming the directory relative campaign paths resolve against.
pub const DIR_VAR: &str = "BAYESDOE_DIR";

#[derive(Debug, Parser)]
#[command(name = "bayesdoe", version, about = "Ask-tell Bayesian optimization for experiment campaigns")]
struct Cli {
    /// Print machine-readable JSON instead of CSV or text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Create a campaign file from a problem definition.
    Init(InitArgs),
    /// Suggest the next batch of experiments and record it as pending.
    Ask(AskArgs),
    /// Add measured rows from a CSV file.
    Tell(TellArgs),
    /// Show size, revision and incumbent.
    Status(CampaignArg),
    /// Recommend the best observed design.
    Recommend(CampaignArg),
    /// Print the non-dominated observed rows.
    Pareto(CampaignArg),
    /// Run a closed loop against an oracle fitted to the campaign data.
    Simulate(SimulateArgs),
    /// Write the trace of the last simulation as CSV.
    ExportTrace(ExportArgs),
}

#[derive(Debug, Args)]
struct CampaignArg {
    #[arg(long)]
    campaign: PathBuf,
}

#[derive(Debug, Args)]
struct InitArgs {
    /// Problem definition (variables and outputs) as JSON.
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Objective to maximize; added if the problem file does not list it.
    #[arg(long = "maximize", value_name = "NAME")]
    maximize: Vec<String>,
    /// Objective to minimize; added if absent, flipped if listed as maximized.
    #[arg(long = "minimize", value_name = "NAME")]
    minimize: Vec<String>,
    /// Constraint as NAME:le:VALUE or NAME:ge:VALUE.
    #[arg(long = "constraint", value_name = "SPEC")]
    constraint: Vec<String>,
    /// Default batch strategy for ask.
    #[arg(long)]
    strategy: Option<String>,
    /// Initial measurements to tell right away.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Replace an existing file.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct AskArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(short = 'q', long = "batch", default_value_t = 1)]
    q: usize,
    /// qei, constant-liar or local-penalization.
    #[arg(long)]
    strategy: Option<String>,
    /// Seed for this suggestion instead of the campaign seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the suggestion without recording it.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Debug, Args)]
struct TellArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Clamp out-of-bounds rows into the box instead of rejecting them.
    #[arg(long)]
    clamp: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleKind {
    /// Full second-order polynomial fitted to each output column.
    Quadratic,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    campaign: PathBuf,
    #[arg(long, value_enum, default_value = "quadratic")]
    oracle: OracleKind,
    #[arg(long, default_value_t = 15)]
    iters: usize,
    #[arg(short = 'q', long = "batch", default_value_t = 2)]
    q: usize,
    #[arg(long, default_value = "qei")]
    strategy: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Trace CSV destination; standard output when absent.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also save the simulated campaign (with the oracle's rows) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    campaign: PathBuf,
    /// Destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Process-level settings read from the environment by `main`.
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub dir: Option<PathBuf>,
}

impl Env {
    pub fn from_process() -> Self {
        Env {
            dir: std::env::var_os(DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from),
        }
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        match &self.dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}

enum Failure {
    Validation(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let missing = matches!(&e, Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound);
        if e.is_validation() || missing {
            Failure::Validation(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

/// Runs one command line. Returns the exit code: 0 on success, 2 for usage
/// and validation errors, 1 for internal failures.
pub fn run<I, T>(args: I, env: &Env, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let json = cli.json;
    let result = match cli.verb {
        Verb::Init(a) => init(a, env, json, out),
        Verb::Ask(a) => ask_verb(a, env, json, out),
        Verb::Tell(a) => tell_verb(a, env, json, out),
        Verb::Status(a) => status(a, env, json, out),
        Verb::Recommend(a) => recommend_verb(a, env, json, out),
        Verb::Pareto(a) => pareto(a, env, json, out),
        Verb::Simulate(a) => simulate(a, env, json, out),
        Verb::ExportTrace(a) => export_trace(a, env, json, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Validation(m) => (2, "validation", m),
                Failure::Internal(m) => (1, "internal", m),
            };
            if json {
                let v = json!({"ok": false, "error": {"code": kind, "message": msg}});
                let _ = writeln!(out, "{v}");
            }
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn parse_strategy(s: &str) -> std::result::Result<BatchStrategy, Failure> {
    s.parse::<BatchStrategy>().map_err(Failure::from)
}

fn print_json(out: &mut dyn Write, v: &Value) -> Outcome {
    writeln!(out, "{}", serde_json::to_string_pretty(v).map_err(|e| Failure::Internal(e.to_string()))?)?;
    Ok(())
}

fn parse_constraint(spec: &str) -> std::result::Result<OutputColumn, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [name, dir, value] = parts.as_slice() else {
        return Err(invalid(format!("constraint '{spec}' is not NAME:le:VALUE or NAME:ge:VALUE")));
    };
    let direction = match dir.to_ascii_lowercase().as_str() {
        "le" => Direction::Le,
        "ge" => Direction::Ge,
        _ => return Err(invalid(format!("constraint '{spec}': direction must be le or ge"))),
    };
    let threshold: f64 = value
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite())
        .ok_or_else(|| invalid(format!("constraint '{spec}': threshold is not a number")))?;
    Ok(OutputColumn::constraint(*name, threshold, direction))
}

fn set_column(columns: &mut Vec<OutputColumn>, column: OutputColumn) {
    match columns.iter_mut().find(|c| c.name == column.name) {
        Some(c) => *c = column,
        None => columns.push(column),
    }
}

fn init(a: InitArgs, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let problem = load_problem(env.resolve(&a.space))?;
    let space = problem.space()?;
    let mut columns = problem.outputs;
    for name in &a.maximize {
        set_column(&mut columns, OutputColumn::objective(name.as_str(), Sense::Maximize));
    }
    for name in &a.minimize {
        set_column(&mut columns, OutputColumn::objective(name.as_str(), Sense::Minimize));
    }
    for spec in &a.constraint {
        set_column(&mut columns, parse_constraint(spec)?);
    }
    if columns.is_empty() {
        columns.push(OutputColumn::objective("y", Sense::Maximize));
    }
    let mut config = CampaignConfig::default();
    if let Some(s) = &a.strategy {
        config.acquisition.strategy = parse_strategy(s)?;
    }
    let path = env.resolve(&a.out);
    if path.exists() && !a.force {
        return Err(invalid(format!("{} already exists; pass --force to replace it", path.display())));
    }
    let mut state = init_campaign(space, columns, config, a.seed)?;
    if let Some(data) = &a.data {
        let rows = load_csv(env.resolve(data), &state.space, state.data.columns(), OutOfBounds::Reject)?;
        state = tell(&state, rows)?;
    }
    if path.exists() {
        let current = load_campaign(&path)?;
        save_campaign(&path, &state, Some(current.revision))?;
    } else {
        save_campaign(&path, &state, None)?;
    }
    if json {
        return print_json(out, &json!({"ok": true, "id": state.id, "revision": state.revision, "observations": state.data.len()}));
    }
    writeln!(out, "created campaign {} with {} observations", state.id, state.data.len())?;
    Ok(())
}

fn ask_verb(a: AskArgs, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let path = env.resolve(&a.campaign);
    let state = load_campaign(&path)?;
    let strategy = match &a.strategy {
        Some(s) => parse_strategy(s)?,
        None => state.config.acquisition.strategy,
    };
    let mut work = state.clone();
    if let Some(seed) = a.seed {
        work.seed = seed;
    }
    let (result, revision) = if a.dry_run {
        (suggest(&work, a.q, strategy)?, state.revision)
    } else {
        let (mut next, result) = ask_with(&work, a.q, strategy)?;
        next.seed = state.seed;
        save_campaign(&path, &next, Some(state.revision))?;
        (result, next.revision)
    };
    if json {
        return print_json(
            out,
            &json!({
                "ok": true,
                "revision": revision,
                "variables": state.space.names(),
                "points": result.points,
                "values": result.values,
                "strategy": result.strategy,
                "cold_start": result.cold_start,
                "feasibility_only": result.feasibility_only,
            }),
        );
    }
    write_points(out, &state.space, &result.points)?;
    Ok(())
}

fn tell_verb(a: TellArgs, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let path = env.resolve(&a.campaign);
    let state = load_campaign(&path)?;
    let policy = if a.clamp { OutOfBounds::Clamp } else { OutOfBounds::Reject };
    let rows = load_csv(env.resolve(&a.data), &state.space, state.data.columns(), policy)?;
    let added = rows.len();
    let next = tell(&state, rows)?;
    save_campaign(&path, &next, Some(state.revision))?;
    if json {
        return print_json(
            out,
            &json!({"ok": true, "revision": next.revision, "added": added, "observations": next.data.len(), "pending": next.pending.len()}),
        );
    }
    writeln!(out, "added {added} rows; {} observations, revision {}", next.data.len(), next.revision)?;
    Ok(())
}

/// Best feasible observed value per objective, as (row, value).
fn incumbents(state: &CampaignState) -> Vec<(String, Option<(usize, f64)>)> {
    let feasible = state.feasible_rows();
    state
        .objectives()
        .into_iter()
        .map(|(col, sense)| {
            let best = feasible
                .iter()
                .map(|&r| (r, state.data.outputs()[r][col]))
                .fold(None, |acc: Option<(usize, f64)>, (r, v)| match acc {
                    Some((_, b)) if sense.sign() * v <= sense.sign() * b => acc,
                    _ => Some((r, v)),
                });
            (state.data.columns()[col].name.clone(), best)
        })
        .collect()
}

fn status(a: CampaignArg, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let state = load_campaign(env.resolve(&a.campaign))?;
    let inc = incumbents(&state);
    if json {
        let inc: Vec<Value> = inc
            .iter()
            .map(|(name, best)| match best {
                Some((r, v)) => json!({"column": name, "row": r, "value": v, "point": state.data.points()[*r]}),
                None => json!({"column": name, "row": null, "value": null, "point": null}),
            })
            .collect();
        return print_json(
            out,
            &json!({
                "ok": true,
                "id": state.id,
                "revision": state.revision,
                "observations": state.data.len(),
                "feasible": state.feasible_rows().len(),
                "pending": state.pending.len(),
                "incumbent": inc,
            }),
        );
    }
    writeln!(out, "campaign: {}", state.id)?;
    writeln!(out, "revision: {}", state.revision)?;
    writeln!(out, "observations: {}", state.data.len())?;
    writeln!(out, "feasible: {}", state.feasible_rows().len())?;
    writeln!(out, "pending: {}", state.pending.len())?;
    let names = state.space.names();
    for (col, best) in inc {
        match best {
            Some((r, v)) => {
                let at: Vec<String> = names
                    .iter()
                    .zip(&state.data.points()[r])
                    .map(|(n, x)| format!("{n}={x}"))
                    .collect();
                writeln!(out, "incumbent {col}: {v} (row {r}; {})", at.join(", "))?;
            }
            None => writeln!(out, "incumbent {col}: none")?,
        }
    }
    Ok(())
}

fn pareto_rows(state: &CampaignState, out: &mut dyn Write, json: bool) -> Outcome {
    let idx = observed_pareto(state);
    if json {
        let rows: Vec<Value> = idx
            .iter()
            .map(|&r| json!({"row": r, "point": state.data.points()[r], "outputs": state.data.outputs()[r]}))
            .collect();
        return print_json(out, &json!({"ok": true, "revision": state.revision, "kind": "pareto", "rows": rows}));
    }
    let mut headers = vec!["row"];
    headers.extend(state.space.names());
    headers.extend(state.data.columns().iter().map(|c| c.name.as_str()));
    let body: Vec<Vec<f64>> = idx
        .iter()
        .map(|&r| {
            std::iter::once(r as f64)
                .chain(state.data.points()[r].iter().copied())
                .chain(state.data.outputs()[r].iter().copied())
                .collect()
        })
        .collect();
    write_csv(out, &headers, &body)?;
    Ok(())
}

fn pareto(a: CampaignArg, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let state = load_campaign(env.resolve(&a.campaign))?;
    pareto_rows(&state, out, json)
}

fn recommend_verb(a: CampaignArg, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let state = load_campaign(env.resolve(&a.campaign))?;
    let rec: Recommendation = match recommend(&state)? {
        RecommendOutcome::Single(r) => r,
        RecommendOutcome::Pareto { .. } => return pareto_rows(&state, out, json),
    };
    if json {
        return print_json(
            out,
            &json!({"ok": true, "revision": state.revision, "kind": "single", "recommendation": rec}),
        );
    }
    let mut headers: Vec<String> = vec!["row".into()];
    headers.extend(state.space.names().into_iter().map(str::to_string));
    let mut values: Vec<String> = vec![rec.index.to_string()];
    values.extend(rec.point.iter().map(f64::to_string));
    for p in &rec.predicted {
        headers.push(format!("{}_mean", p.column));
        headers.push(format!("{}_sd", p.column));
        values.push(p.mean.to_string());
        values.push(p.variance.max(0.0).sqrt().to_string());
    }
    headers.push("feasibility".into());
    values.push(rec.feasibility.to_string());
    headers.push("rationale".into());
    values.push(
        match rec.rationale {
            bayesdoe::Rationale::BestFeasibleObserved => "best_feasible_observed",
            bayesdoe::Rationale::BestPosterior => "best_posterior",
        }
        .to_string(),
    );
    writeln!(out, "{}", headers.join(","))?;
    writeln!(out, "{}", values.join(","))?;
    Ok(())
}

fn simulate(a: SimulateArgs, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let path = env.resolve(&a.campaign);
    let state = load_campaign(&path)?;
    let strategy = parse_strategy(&a.strategy)?;
    let OracleKind::Quadratic = a.oracle;
    let oracles = (0..state.data.n_outputs())
        .map(|k| fit_quadratic_to_dataset(&state.space, &state.data, k))
        .collect::<bayesdoe::Result<Vec<_>>>()?;
    let mut work = state.clone();
    if let Some(seed) = a.seed {
        work.seed = seed;
    }
    let (mut simulated, trace) = simulate_loop(
        &work,
        |x: &[f64]| oracles.iter().map(|o| o.evaluate(x)).collect(),
        a.iters,
        a.q,
        strategy,
    )?;
    let mut recorded = state.clone();
    recorded.last_simulation = Some(trace.clone());
    save_campaign(&path, &recorded, Some(state.revision))?;
    if let Some(dest) = &a.out {
        simulated.seed = state.seed;
        let dest = env.resolve(dest);
        if dest.exists() {
            return Err(invalid(format!("{} already exists", dest.display())));
        }
        save_campaign(dest, &simulated, None)?;
    }
    emit_trace(&state, &trace, a.trace.as_deref().map(|p| env.resolve(p)), json, out)
}

fn emit_trace(state: &CampaignState, trace: &SimulationTrace, dest: Option<PathBuf>, json: bool, out: &mut dyn Write) -> Outcome {
    if let Some(dest) = &dest {
        write_trace(std::fs::File::create(dest)?, &state.space, state.data.columns(), trace)?;
    }
    if json {
        return print_json(out, &json!({"ok": true, "revision": state.revision, "trace": trace}));
    }
    if dest.is_none() {
        write_trace(out, &state.space, state.data.columns(), trace)?;
    }
    Ok(())
}

fn export_trace(a: ExportArgs, env: &Env, json: bool, out: &mut dyn Write) -> Outcome {
    let state = load_campaign(env.resolve(&a.campaign))?;
    let trace = state
        .last_simulation
        .as_ref()
        .ok_or_else(|| invalid("campaign has no simulation trace; run simulate first"))?;
    emit_trace(&state, trace, a.out.as_deref().map(|p| env.resolve(p)), json, out)
}
