//! `flowlab`: build field documents, run flows, verify lemmas, sample porousness.
//!
//! Exit codes: 0 all checks pass, 1 a lemma check failed, 2 usage or configuration
//! error, 3 integrator failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flowlab::field::{from_document, to_document};
use flowlab::flow::{porousness_estimate, trajectory, DeterrenceSystem, PUMP_HORIZON};
use flowlab::interval::SymInterval;
use flowlab::ode::OdeOptions;
use flowlab::pump::PumpBundle;
use flowlab::report::{fmt17, RunConfig, SuiteReport};
use flowlab::verify::{lemma_keys, run_suite};
use flowlab::{Error, Field, FieldExpr};

#[derive(Parser, Debug)]
#[command(name = "flowlab", version, about = "Vector field constructions, flows and lemma checks")]
struct Cli {
    /// Run configuration document (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Integrator tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Highest jet order checked.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a field document and write it back in canonical form.
    Build {
        document: PathBuf,
        /// Where to write pump bookkeeping when the field contains a pump.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Integrate a field and write the trajectory as CSV.
    Flow {
        document: PathBuf,
        /// Comma-separated start point.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long, allow_hyphen_values = true)]
        time: f64,
        /// Spacing of dense output rows; accepted steps only when absent.
        #[arg(long)]
        dt: Option<f64>,
        /// Level crossings to record, as `axis:level` with 1-based axes.
        #[arg(long = "event", allow_hyphen_values = true)]
        events: Vec<String>,
    },
    /// Run lemma checks by key, or `all`.
    Verify { keys: Vec<String> },
    /// Estimate the fraction of certified undeterred points in a box.
    Sample {
        document: PathBuf,
        /// Half-width of the deterrence box.
        #[arg(long = "box")]
        half_width: u64,
        #[arg(short, long)]
        n: usize,
        #[arg(long)]
        horizon: Option<f64>,
        /// Radius of the excluded tube around the lateral axes.
        #[arg(long)]
        tube: Option<f64>,
    },
    /// Run every configured lemma check and write the full report.
    Report,
}

enum Failure {
    Usage(String),
    Integrator(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_integrator() {
            Failure::Integrator(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&read(p)?).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    if let Some(k) = cli.order {
        cfg.order = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_field(path: &Path) -> Result<Field, Failure> {
    let expr = from_document(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(Field::new(expr)?)
}

fn pump_periods(expr: &FieldExpr, out: &mut Vec<u32>) {
    match expr {
        FieldExpr::Pstar { m } | FieldExpr::Pplus { m } | FieldExpr::P0 { m } => out.push(*m),
        FieldExpr::Blend { a, b, .. } => {
            pump_periods(a, out);
            pump_periods(b, out);
        }
        FieldExpr::Block { first, second } => {
            pump_periods(first, out);
            pump_periods(second, out);
        }
        FieldExpr::Exchange { inner, outer, .. } => {
            pump_periods(inner, out);
            pump_periods(outer, out);
        }
        FieldExpr::Translate { inner, .. } | FieldExpr::Scale { inner, .. } | FieldExpr::ReflectDouble { inner, .. } => {
            pump_periods(inner, out)
        }
        _ => {}
    }
}

fn build(cli: &Cli, document: &Path, manifest: &Option<PathBuf>) -> Result<ExitCode, Failure> {
    let field = load_field(document)?;
    emit(&cli.out, &to_document(field.expr())?)?;
    let mut periods = Vec::new();
    pump_periods(field.expr(), &mut periods);
    periods.sort_unstable();
    periods.dedup();
    if !periods.is_empty() {
        let pumps: Vec<serde_json::Value> = periods
            .iter()
            .map(|m| {
                let b = PumpBundle::new(*m)?;
                Ok(serde_json::json!({
                    "m": m,
                    "t_times": fmt17(b.t_times),
                    "j0_half_width": b.j0.half_width(),
                    "k0_half_width": b.k0.half_width(),
                }))
            })
            .collect::<Result<_, Error>>()?;
        let text = serde_json::to_string_pretty(&serde_json::json!({ "pumps": pumps })).expect("manifest serializes");
        match manifest {
            Some(p) => fs::write(p, text + "\n").map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
            None => eprintln!("{text}"),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_point(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("malformed coordinate {s:?} in {text:?}"))))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|p| {
            if p.iter().all(|x| x.is_finite()) {
                Ok(p)
            } else {
                Err(Failure::Usage(format!("start point {text:?} is not finite")))
            }
        })
}

fn parse_event(text: &str, dim: usize) -> Result<(usize, f64), Failure> {
    let bad = || Failure::Usage(format!("event {text:?} must look like axis:level with axis in 1..={dim}"));
    let (axis, level) = text.split_once(':').ok_or_else(bad)?;
    let axis: usize = axis.trim().parse().map_err(|_| bad())?;
    let level: f64 = level.trim().parse().map_err(|_| bad())?;
    if axis == 0 || axis > dim {
        return Err(bad());
    }
    Ok((axis - 1, level))
}

fn flow(cli: &Cli, document: &Path, start: &str, time: f64, dt: Option<f64>, events: &[String]) -> Result<ExitCode, Failure> {
    let cfg = config(cli)?;
    let field = load_field(document)?;
    let start = parse_point(start)?;
    if start.len() != field.dim() {
        return Err(Failure::Usage(format!("start point has {} coordinates, field needs {}", start.len(), field.dim())));
    }
    if !time.is_finite() {
        return Err(Failure::Usage("time must be finite".into()));
    }
    if let Some(d) = dt {
        if !(d > 0.0) {
            return Err(Failure::Usage("--dt must be positive".into()));
        }
    }
    let watch = events.iter().map(|e| parse_event(e, field.dim())).collect::<Result<Vec<_>, _>>()?;
    let traj = trajectory(&field, &start, time, &OdeOptions::with_tol(cfg.tol), dt, &watch)?;
    emit(&cli.out, &traj.to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn suite(cli: &Cli, cfg: RunConfig) -> Result<ExitCode, Failure> {
    let reports = run_suite(&cfg)?;
    for r in &reports {
        eprintln!("{}", r.line());
    }
    let integrator = reports.iter().any(|r| r.integrator_failure);
    let report = SuiteReport::new(cfg, reports);
    emit(&cli.out, &(report.to_json() + "\n"))?;
    Ok(if integrator {
        ExitCode::from(3)
    } else if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn verify(cli: &Cli, keys: &[String]) -> Result<ExitCode, Failure> {
    let mut cfg = config(cli)?;
    if keys.is_empty() {
        return Err(Failure::Usage(format!("give lemma keys or `all`; valid keys: {}", lemma_keys().join(", "))));
    }
    if !keys.iter().any(|k| k == "all") {
        cfg.lemmas = keys.to_vec();
    }
    suite(cli, cfg)
}

fn sample(
    cli: &Cli,
    document: &Path,
    half_width: u64,
    n: usize,
    horizon: Option<f64>,
    tube: Option<f64>,
) -> Result<ExitCode, Failure> {
    let cfg = config(cli)?;
    if n == 0 {
        return Err(Failure::Usage("sample count must be at least 1".into()));
    }
    let field = load_field(document)?;
    let sys = DeterrenceSystem::new(field, SymInterval::new(half_width)?)?;
    let horizon = horizon.or(cfg.horizon).unwrap_or(PUMP_HORIZON);
    let rep = porousness_estimate(&sys, n, cfg.seed, horizon, tube, &OdeOptions::with_tol(cfg.tol))?;
    let text = serde_json::to_string_pretty(&rep).expect("porousness report serializes");
    emit(&cli.out, &(text + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, Failure> {
    match &cli.command {
        Command::Build { document, manifest } => build(cli, document, manifest),
        Command::Flow { document, start, time, dt, events } => flow(cli, document, start, *time, *dt, events),
        Command::Verify { keys } => verify(cli, keys),
        Command::Sample { document, half_width, n, horizon, tube } => sample(cli, document, *half_width, *n, *horizon, *tube),
        Command::Report => {
            let cfg = config(cli)?;
            suite(cli, cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Integrator(msg)) => {
            eprintln!("integrator failure: {msg}");
            ExitCode::from(3)
        }
    }
}
