//! `solcon` command-line front end.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::integrator::integrate;
use crate::library::{LibrarySpec, UnaryFamily, UnaryKind};
use crate::miner::{
    compare_across_initial_conditions, find_constraints, verify_constraints, ConstraintReport,
    MineError,
};
use crate::models;
use crate::report::{format_g, render_text, NO_CONNECTIONS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NO_CONSTRAINTS: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "solcon",
    version,
    about = "Find linear constraints among candidate functions of ODE solutions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine solution constraints and print the general solution.
    Constraints(ConstraintsArgs),
    /// Integrate the system and write the trajectory as CSV.
    Solve(SolveArgs),
    /// Re-check the constraints of a JSON report on a fresh trajectory.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// JSON run configuration.
    #[arg(conflicts_with = "model")]
    pub config: Option<PathBuf>,
    /// Built-in model instead of a config file.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(models::MODEL_NAMES))]
    pub model: Option<String>,
    /// End time T.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Number of grid intervals m (m + 1 grid points).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Initial state as comma-separated values; repeat to compare runs.
    #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
    pub ic: Vec<Vec<f64>>,
    /// Seed for sampling initial states from `initial_ranges`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integrator relative tolerance.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Integrator absolute tolerance.
    #[arg(long)]
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ConstraintsArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Monomial degrees, e.g. `0,1,2`; `none` for no monomials.
    #[arg(long, value_parser = parse_powers)]
    pub powers: Option<Powers>,
    /// Unary family `kind[:frequency]` with kind in sin, cos, exp, ln; repeatable.
    #[arg(long, value_parser = parse_unary)]
    pub unary: Vec<UnaryFamily>,
    /// Reduction sweeps p.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Mine from this many sampled initial states and compare the results.
    #[arg(long)]
    pub compare_ics: Option<usize>,
    /// Zero threshold for the reduction (default: sized to the Gram matrix).
    #[arg(long)]
    pub rref_tol: Option<f64>,
    /// Relative residual a constraint must meet to be reported as passing.
    #[arg(long)]
    pub residual_tol: Option<f64>,
    /// Reduce the raw Gram matrix instead of the column-normalized one.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Omit the generation timestamp from JSON output.
    #[arg(long)]
    pub no_timestamp: bool,
    /// Write output here instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// CSV destination (standard output if omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// JSON report written by `constraints --format json`.
    pub report: PathBuf,
    /// Config the report must match.
    #[arg(long, conflicts_with = "model")]
    pub config: Option<PathBuf>,
    /// Built-in model the report must match.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(models::MODEL_NAMES))]
    pub model: Option<String>,
    /// Grid refinement factor: verify on m·refine intervals.
    #[arg(long, default_value_t = 1)]
    pub refine: usize,
    /// Relative residual threshold (default: the report's residual tolerance).
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Integrator relative tolerance for the fresh trajectory.
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Integrator absolute tolerance for the fresh trajectory.
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| {
            let v: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("not a number: `{}`", p.trim()))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("not finite: `{}`", p.trim()))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Powers(pub Vec<u32>);

fn parse_powers(s: &str) -> Result<Powers, String> {
    if s.trim().is_empty() || s.trim() == "none" {
        return Ok(Powers(Vec::new()));
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| format!("not a non-negative integer: `{}`", p.trim()))
        })
        .collect::<Result<_, _>>()
        .map(Powers)
}

fn parse_unary(s: &str) -> Result<UnaryFamily, String> {
    let (kind, freq) = match s.split_once(':') {
        Some((k, f)) => (
            k,
            f.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad frequency `{}`", f))?,
        ),
        None => (s, 1.0),
    };
    let kind =
        UnaryKind::parse(kind.trim()).ok_or_else(|| format!("unknown unary kind `{}`", kind))?;
    Ok(UnaryFamily::new(kind, freq))
}

type CliResult = Result<i32, String>;

fn load_base(config: Option<&Path>, model: Option<&str>) -> Result<RunConfig, String> {
    match (config, model) {
        (Some(path), _) => RunConfig::load(path).map_err(|e| e.to_string()),
        (None, Some(name)) => {
            models::builtin(name).ok_or_else(|| format!("unknown model `{}`", name))
        }
        (None, None) => Err("give a config file or --model".into()),
    }
}

fn resolve(source: &SourceArgs) -> Result<RunConfig, String> {
    let mut cfg = load_base(source.config.as_deref(), source.model.as_deref())?;
    if let Some(t) = source.t_end {
        cfg.t_end = t;
    }
    if let Some(m) = source.grid {
        cfg.m = m;
    }
    if let Some(r) = source.rel_tol {
        cfg.integrator.rel_tol = r;
    }
    if let Some(a) = source.abs_tol {
        cfg.integrator.abs_tol = a;
    }
    if let Some(s) = source.seed {
        cfg.seed = Some(s);
    }
    if let Some(x0) = source.ic.first() {
        cfg.initial = Some(x0.clone());
    }
    Ok(cfg)
}

/// The initial states to run: explicit `--ic` values, or sampled ones.
fn initial_states(
    cfg: &RunConfig,
    source: &SourceArgs,
    count: usize,
) -> Result<(Vec<Vec<f64>>, bool), String> {
    if !source.ic.is_empty() {
        return Ok((source.ic.clone(), false));
    }
    let sampled = cfg.initial.is_none() || (count > 1 && cfg.initial_ranges.is_some());
    let states = if sampled {
        let ranges = cfg
            .initial_ranges
            .as_ref()
            .ok_or("no initial_ranges to sample from")?;
        crate::config::sample_initial_states(ranges, cfg.effective_seed(None), count)
    } else {
        cfg.initial_states(count, None).map_err(|e| e.to_string())?
    };
    Ok((states, sampled))
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), String> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {}", path.display(), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| e.to_string())
        }
    }
}

fn now_unix() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn run_once(cfg: &RunConfig, x0: Vec<f64>, sampled: bool) -> Result<ConstraintReport, MineError> {
    let problem = cfg
        .problem(x0)
        .map_err(|e| MineError::InvalidConfig(e.to_string()))?;
    let mut report = find_constraints(&problem, &cfg.library, &cfg.miner_config())?;
    report.provenance.model = cfg.name.clone();
    if sampled {
        report.provenance.seed = Some(cfg.effective_seed(None));
    }
    Ok(report)
}

fn cmd_constraints(args: &ConstraintsArgs) -> CliResult {
    let mut cfg = resolve(&args.source)?;
    if args.powers.is_some() || !args.unary.is_empty() {
        let powers = args
            .powers
            .clone()
            .map(|p| p.0)
            .unwrap_or_else(|| cfg.library.powers().to_vec());
        let unary = if args.unary.is_empty() {
            cfg.library.unary().to_vec()
        } else {
            args.unary.clone()
        };
        cfg.library = LibrarySpec::new(powers, unary).map_err(|e| e.to_string())?;
    }
    if let Some(p) = args.iterations {
        cfg.p = p;
    }
    if let Some(t) = args.rref_tol {
        cfg.tolerances.rref = Some(t);
    }
    if let Some(t) = args.residual_tol {
        cfg.tolerances.residual = t;
    }
    if args.no_normalize {
        cfg.tolerances.normalize_columns = false;
    }
    cfg.validate().map_err(|e| e.to_string())?;

    let count = args
        .compare_ics
        .unwrap_or(1)
        .max(args.source.ic.len())
        .max(1);
    let (states, sampled) = initial_states(&cfg, &args.source, count)?;
    let stamp = if args.no_timestamp { None } else { now_unix() };
    let runs: Vec<Result<ConstraintReport, MineError>> = states
        .iter()
        .map(|x0| {
            run_once(&cfg, x0.clone(), sampled).map(|mut r| {
                r.generated_unix = stamp;
                r
            })
        })
        .collect();
    for run in &runs {
        if let Err(e) = run {
            if !e.is_no_constraints() {
                return Err(e.to_string());
            }
        }
    }
    let found = runs.iter().any(|r| r.is_ok());
    let code = if found { EXIT_OK } else { EXIT_NO_CONSTRAINTS };

    if runs.len() == 1 {
        let text = match (&runs[0], args.format) {
            (Ok(r), Format::Text) => render_text(r),
            (Ok(r), Format::Json) => to_json(r)?,
            (Err(_), Format::Text) => format!("{}\n", NO_CONNECTIONS),
            (Err(e), Format::Json) => to_json(&serde_json::json!({
                "constraints": false,
                "message": NO_CONNECTIONS,
                "reason": e.to_string(),
            }))?,
        };
        emit(args.output.as_deref(), &text)?;
        return Ok(code);
    }

    let comparison = compare_across_initial_conditions(&runs, 1e-6).map_err(|e| e.to_string())?;
    let first_ok = runs.iter().find_map(|r| r.as_ref().ok());
    let text = match args.format {
        Format::Text => {
            let mut out = String::new();
            for (i, (run, x0)) in runs.iter().zip(&states).enumerate() {
                let _ = writeln!(out, "== Run {} {}", i + 1, format_state(x0));
                match run {
                    Ok(r) => out.push_str(&render_text(r)),
                    Err(_) => {
                        let _ = writeln!(out, "{}", NO_CONNECTIONS);
                    }
                }
            }
            out.push_str("== Comparison\n");
            out.push_str(&comparison.summary(
                first_ok.map(|r| r.terms.as_slice()),
                cfg.variables.as_slice(),
            ));
            out
        }
        Format::Json => {
            let runs_json: Vec<serde_json::Value> = runs
                .iter()
                .zip(&states)
                .map(|(r, x0)| match r {
                    Ok(r) => serde_json::to_value(r).expect("report serializes"),
                    Err(e) => serde_json::json!({ "constraints": false, "initial": x0, "reason": e.to_string() }),
                })
                .collect();
            to_json(&serde_json::json!({ "runs": runs_json, "comparison": comparison }))?
        }
    };
    emit(args.output.as_deref(), &text)?;
    Ok(code)
}

fn format_state(x: &[f64]) -> String {
    format!(
        "x0 = ({})",
        x.iter()
            .map(|v| format_g(*v))
            .collect::<Vec<_>>()
            .join(", ")
    )
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| e.to_string())
}

fn cmd_solve(args: &SolveArgs) -> CliResult {
    let cfg = resolve(&args.source)?;
    cfg.validate().map_err(|e| e.to_string())?;
    let (states, _) = initial_states(&cfg, &args.source, 1)?;
    let problem = cfg.problem(states[0].clone()).map_err(|e| e.to_string())?;
    let grid = integrate(&problem, &cfg.integrator).map_err(|e| e.to_string())?;
    let mut csv = String::new();
    let _ = writeln!(csv, "t,{}", cfg.variables.join(","));
    for (j, t) in grid.times.iter().enumerate() {
        let _ = write!(csv, "{}", t);
        for i in 0..grid.dim() {
            let _ = write!(csv, ",{}", grid.states[(j, i)]);
        }
        csv.push('\n');
    }
    emit(args.output.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.report)
        .map_err(|e| format!("cannot read {}: {}", args.report.display(), e))?;
    let report: ConstraintReport =
        serde_json::from_str(&text).map_err(|e| format!("invalid report JSON: {}", e))?;
    let prov = &report.provenance;
    if args.config.is_some() || args.model.is_some() {
        let cfg = load_base(args.config.as_deref(), args.model.as_deref())?;
        let system = cfg.system().map_err(|e| e.to_string())?;
        let same = cfg.variables == prov.variables
            && cfg.parameters == prov.parameters
            && system.equations() == prov.equations.as_slice();
        if !same {
            return Err("incompatible report: system differs from the given config".into());
        }
    }
    if args.refine == 0 {
        return Err("--refine must be at least 1".into());
    }
    let problem = prov.problem(args.refine).map_err(|e| e.to_string())?;
    let mut opts = prov.config.integrator;
    if let Some(r) = args.rel_tol {
        opts.rel_tol = r;
    }
    if let Some(a) = args.abs_tol {
        opts.abs_tol = a;
    }
    let grid = integrate(&problem, &opts).map_err(|e| e.to_string())?;
    let tolerance = args.tolerance.unwrap_or(prov.config.residual_tolerance);
    let checks = verify_constraints(&report, &grid, tolerance)
        .map_err(|e| format!("incompatible report: {}", e))?;
    let all_pass = checks.iter().all(|c| c.passed);

    let out = match args.format {
        Format::Json => to_json(&serde_json::json!({
            "tolerance": tolerance,
            "intervals": problem.intervals,
            "checks": checks,
            "passed": all_pass,
        }))?,
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(
                out,
                "Verifying {} constraint(s) on {} grid points (tolerance {}):",
                checks.len(),
                grid.len(),
                format_g(tolerance)
            );
            for (k, (c, v)) in checks.iter().zip(&report.basis_vectors).enumerate() {
                let _ = writeln!(
                    out,
                    "  [{}] {}  max residual {}, relative {}  {}",
                    k + 1,
                    if c.passed { "PASS" } else { "FAIL" },
                    format_g(c.max_abs),
                    format_g(c.relative),
                    crate::miner::format_combination(v, &report.terms, report.variables())
                );
            }
            let _ = writeln!(
                out,
                "{}",
                if all_pass {
                    "All constraints hold."
                } else {
                    "Some constraints fail."
                }
            );
            out
        }
    };
    emit(None, &out)?;
    Ok(if all_pass { EXIT_OK } else { EXIT_ERROR })
}

/// Runs the command line in `args` and returns the process exit code.
pub fn run_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Constraints(a) => cmd_constraints(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {}", msg);
            EXIT_ERROR
        }
    }
}

pub fn run() -> i32 {
    run_with(std::env::args_os())
}
