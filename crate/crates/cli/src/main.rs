//! `cbi` — worst-case reliability assessment over interval-constrained
//! priors: solve for the conservative posterior, plan demand budgets,
//! regenerate comparison tables, and emit curve data as CSV.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use cbi_core::hfix::HContext;
use cbi_core::model::IntervalPartition;
use cbi_core::oracle::{grid_minimize, GridOptions};
use cbi_core::planner::{
    asymptotic_limits, phi_growth_curve, plan_demands_beta, plan_demands_cbi, ratio_curve,
    stationary_convergence_curve, PlanResult, PlannerError, PlannerOptions,
};
use cbi_core::solver::{
    build_conservative_prior, iterate_trace, solve, DiscretePrior, FixedPointSolution, SolverError,
};

use config::ProblemConfig;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    NoConvergence(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(msg) | CliError::NoConvergence(msg) | CliError::Io(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NoConvergence { .. } => CliError::NoConvergence(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::Solver(s) => s.into(),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "cbi",
    version,
    about = "Worst-case Bayesian reliability assessment over interval-constrained priors"
)]
struct Cli {
    /// Problem configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Emit machine-readable JSON instead of human text.
    #[arg(long, global = true)]
    json: bool,

    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for independent table cells.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Seed for randomized test tooling; the subcommands themselves are
    /// deterministic and ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the worst-case posterior for one configuration.
    Solve {
        /// Also emit the iterate sequence.
        #[arg(long)]
        trace: bool,
    },
    /// Demand budgets (worst-case and uniform-prior baseline) for one
    /// configuration; requires target.alpha.
    Plan {
        /// Success-count cap for the search.
        #[arg(long, default_value_t = 1_000_000_000)]
        max_k: u64,
    },
    /// Regenerate the demand-budget comparison table.
    Table {
        /// (m, alpha) pairs as m=alpha.
        #[arg(long = "m-alpha", value_parser = parse_m_alpha,
              default_values_t = [MAlpha(46, 0.009895), MAlpha(500, 0.097982), MAlpha(1000, 0.178476)])]
        m_alpha: Vec<MAlpha>,
        /// Second breakpoints, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-4, 2e-5, 1e-5])]
        y2: Vec<f64>,
        /// First breakpoint shared by all columns.
        #[arg(long, default_value_t = 1e-6)]
        y1: f64,
        /// Failure counts 0..=r_max.
        #[arg(long, default_value_t = 9)]
        r_max: u64,
    },
    /// Emit one curve as CSV.
    Curve {
        #[arg(long, value_enum)]
        kind: CurveKind,
        /// Sweep "start:stop[:count]" over r (ratio, stationary) or k
        /// (phi-growth).
        #[arg(long)]
        sweep: Option<String>,
        /// Space sweep points logarithmically.
        #[arg(long)]
        log_scale: bool,
        /// Sample count for h-trace.
        #[arg(long, default_value_t = 512)]
        samples: usize,
    },
    /// Emit the iterate sequence for one configuration.
    Trace {
        /// Starting value in (0, 1].
        #[arg(long)]
        start: Option<f64>,
    },
    /// Brute-force grid minimization for spot checks.
    Oracle {
        #[arg(long)]
        density: Option<usize>,
        #[arg(long)]
        levels: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct MAlpha(u32, f64);

impl std::fmt::Display for MAlpha {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}={}", self.0, self.1)
    }
}

fn parse_m_alpha(s: &str) -> Result<MAlpha, String> {
    let (m, alpha) = s
        .split_once('=')
        .ok_or_else(|| format!("expected m=alpha, got {s:?}"))?;
    Ok(MAlpha(
        m.parse().map_err(|e| format!("bad m in {s:?}: {e}"))?,
        alpha.parse().map_err(|e| format!("bad alpha in {s:?}: {e}"))?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CurveKind {
    Ratio,
    Stationary,
    PhiGrowth,
    HTrace,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(output) => {
            if let Err(e) = emit(&cli.out, &output) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 2,
                CliError::NoConvergence(_) => 3,
                CliError::Io(_) => 1,
            })
        }
    }
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ProblemConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required for this command".into()))?;
    ProblemConfig::from_path(path)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Solve { trace } => cmd_solve(cli, *trace),
        Command::Plan { max_k } => cmd_plan(cli, *max_k),
        Command::Table {
            m_alpha,
            y2,
            y1,
            r_max,
        } => cmd_table(cli, m_alpha, y2, *y1, *r_max),
        Command::Curve {
            kind,
            sweep,
            log_scale,
            samples,
        } => cmd_curve(cli, *kind, sweep.as_deref(), *log_scale, *samples),
        Command::Trace { start } => cmd_trace(cli, *start),
        Command::Oracle { density, levels } => cmd_oracle(cli, *density, *levels),
    }
}

#[derive(Serialize)]
struct SolveReport<'a> {
    config: &'a ProblemConfig,
    solution: &'a FixedPointSolution,
    prior: &'a DiscretePrior,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<&'a cbi_core::solver::IterateTrace>,
}

fn cmd_solve(cli: &Cli, with_trace: bool) -> Result<String, CliError> {
    let cfg = load_config(cli)?;
    let partition = cfg.partition()?;
    let obs = cfg.observation()?;
    let target = cfg.target()?;
    let opts = cfg.solver_options();
    let solution = solve(&partition, &obs, target.m, &opts)?;
    let prior = build_conservative_prior(&solution, &partition, &obs, target.m)?;
    let trace = if with_trace {
        Some(iterate_trace(&partition, &obs, target.m, &opts)?)
    } else {
        None
    };

    if cli.json {
        let report = SolveReport {
            config: &cfg,
            solution: &solution,
            prior: &prior,
            trace: trace.as_ref(),
        };
        return Ok(format!("{}\n", serde_json::to_string_pretty(&report).unwrap()));
    }

    let mut out = String::new();
    if let Some(trace) = &trace {
        writeln!(out, "{}", trace_csv(trace)).unwrap();
    }
    writeln!(out, "phi_star    {}", solution.phi_star).unwrap();
    writeln!(out, "y_star      {}", solution.y_star).unwrap();
    match solution.y_star_star {
        Some(y) => writeln!(out, "y_star_star {y}").unwrap(),
        None => writeln!(out, "y_star_star -").unwrap(),
    }
    writeln!(
        out,
        "j1 {}  j2 {}  branch {:?}",
        solution.j1.map_or("-".into(), |j| j.to_string()),
        solution.j2,
        solution.branch
    )
    .unwrap();
    writeln!(
        out,
        "iterations {}  residual {:.3e}  converged {}",
        solution.iterations, solution.residual, solution.converged
    )
    .unwrap();
    writeln!(out, "prior atoms (location, mass):").unwrap();
    for atom in &prior.atoms {
        writeln!(out, "  {} {}", atom.location, atom.mass).unwrap();
    }
    Ok(out)
}

#[derive(Serialize)]
struct PlanReport {
    cbi: PlanResult,
    beta: PlanResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratio: Option<f64>,
}

fn cmd_plan(cli: &Cli, max_k: u64) -> Result<String, CliError> {
    let cfg = load_config(cli)?;
    let partition = cfg.partition()?;
    let target = cfg.target()?;
    let alpha = cfg.alpha_required()?;
    let r = cfg.observation.r;
    let opts = PlannerOptions {
        max_k,
        solver: cfg.solver_options(),
    };
    let cbi = plan_demands_cbi(&partition, target.m, alpha, r, &opts)?;
    let beta = plan_demands_beta(target.m, alpha, r, &opts)?;
    let ratio = match (beta.total_demands(), cbi.total_demands()) {
        (Some(b), Some(c)) => Some(b as f64 / c as f64),
        _ => None,
    };
    if cli.json {
        let report = PlanReport { cbi, beta, ratio };
        return Ok(format!("{}\n", serde_json::to_string_pretty(&report).unwrap()));
    }
    let mut out = String::new();
    writeln!(out, "baseline: {}", plan_text(&beta)).unwrap();
    writeln!(out, "worst-case: {}", plan_text(&cbi)).unwrap();
    if let Some(ratio) = ratio {
        writeln!(out, "ratio (baseline/worst-case): {ratio:.6}").unwrap();
    }
    Ok(out)
}

fn plan_text(plan: &PlanResult) -> String {
    match plan {
        PlanResult::Feasible {
            k_required,
            total_demands,
            phi_at_k,
        } => format!("k_required {k_required}  total_demands {total_demands}  phi {phi_at_k}"),
        PlanResult::Infeasible => "INFEASIBLE".into(),
        PlanResult::InfeasibleNumeric => "INFEASIBLE_NUMERIC (search cap reached)".into(),
    }
}

fn cmd_table(
    cli: &Cli,
    m_alpha: &[MAlpha],
    y2s: &[f64],
    y1: f64,
    r_max: u64,
) -> Result<String, CliError> {
    let mut cells = Vec::new();
    for &MAlpha(m, alpha) in m_alpha {
        for &y2 in y2s {
            for r in 0..=r_max {
                cells.push((m, alpha, y2, r));
            }
        }
    }
    let opts = PlannerOptions::default();
    let run_cell = |&(m, alpha, y2, r): &(u32, f64, f64, u64)| -> String {
        let partition = match IntervalPartition::uniform_consistent(&[0.0, y1, y2, 1.0]) {
            Ok(p) => p,
            Err(e) => return format!("{m},{alpha},{y2},{r},,,,false,{e}"),
        };
        let beta = plan_demands_beta(m, alpha, r, &opts);
        let cbi = plan_demands_cbi(&partition, m, alpha, r, &opts);
        match (beta, cbi) {
            (Ok(beta), Ok(cbi)) => {
                let beta_cell = beta
                    .total_demands()
                    .map_or("INFEASIBLE_NUMERIC".into(), |t| t.to_string());
                let (cbi_cell, feasible) = match cbi {
                    PlanResult::Feasible { total_demands, .. } => (total_demands.to_string(), true),
                    PlanResult::Infeasible => ("INFEASIBLE".into(), false),
                    PlanResult::InfeasibleNumeric => ("INFEASIBLE_NUMERIC".into(), false),
                };
                let ratio = match (beta.total_demands(), cbi.total_demands()) {
                    (Some(b), Some(c)) => format!("{}", b as f64 / c as f64),
                    _ => String::new(),
                };
                format!("{m},{alpha},{y2},{r},{beta_cell},{cbi_cell},{ratio},{feasible},")
            }
            (Err(e), _) | (_, Err(e)) => format!("{m},{alpha},{y2},{r},,,,false,{e}"),
        }
    };

    let rows: Vec<String> = if cli.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };

    let mut out = String::from("m,alpha,y2,r,beta_total,cbi_total,ratio,feasible,error\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}

/// "start:stop[:count]" -> sweep values, linear or log spaced.
fn parse_sweep(spec: &str, default_count: usize, log_scale: bool) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(CliError::Validation(format!(
            "sweep {spec:?} must be start:stop[:count]"
        )));
    }
    let parse = |s: &str| -> Result<f64, CliError> {
        s.parse()
            .map_err(|e| CliError::Validation(format!("bad sweep number {s:?}: {e}")))
    };
    let start = parse(parts[0])?;
    let stop = parse(parts[1])?;
    let count = match parts.get(2) {
        Some(c) => c
            .parse::<usize>()
            .map_err(|e| CliError::Validation(format!("bad sweep count: {e}")))?,
        None => default_count,
    };
    if stop.is_nan() || start.is_nan() || stop < start || count < 2 {
        return Err(CliError::Validation(format!("empty sweep {spec:?}")));
    }
    if log_scale && start <= 0.0 {
        return Err(CliError::Validation("log sweep requires start > 0".into()));
    }
    let values = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            if log_scale {
                (start.ln() + (stop.ln() - start.ln()) * t).exp()
            } else {
                start + (stop - start) * t
            }
        })
        .collect();
    Ok(values)
}

fn integer_sweep(values: &[f64]) -> Vec<u64> {
    let mut out: Vec<u64> = values.iter().map(|v| v.round().max(0.0) as u64).collect();
    out.dedup();
    out
}

fn cmd_curve(
    cli: &Cli,
    kind: CurveKind,
    sweep: Option<&str>,
    log_scale: bool,
    samples: usize,
) -> Result<String, CliError> {
    let cfg = load_config(cli)?;
    let partition = cfg.partition()?;
    let target = cfg.target()?;
    let opts = PlannerOptions {
        solver: cfg.solver_options(),
        ..Default::default()
    };
    let mut out = String::new();
    match kind {
        CurveKind::Ratio => {
            let alpha = cfg.alpha_required()?;
            let spec = sweep.unwrap_or("0:9");
            let rs = integer_sweep(&parse_sweep(spec, 10, false)?);
            let points = ratio_curve(&partition, target.m, alpha, &rs, &opts)?;
            out.push_str("r,beta_total,cbi_total,ratio,feasible\n");
            for p in points {
                let beta = p.beta.total_demands().map_or(String::new(), |t| t.to_string());
                let cbi = p.cbi.total_demands().map_or(String::new(), |t| t.to_string());
                let ratio = p.ratio.map_or(String::new(), |x| x.to_string());
                writeln!(out, "{},{},{},{},{}", p.r, beta, cbi, ratio, p.cbi.is_feasible())
                    .unwrap();
            }
        }
        CurveKind::Stationary => {
            let alpha = cfg.alpha_required()?;
            let spec = sweep.unwrap_or("0:9");
            let rs = integer_sweep(&parse_sweep(spec, 10, false)?);
            let points = stationary_convergence_curve(&partition, target.m, alpha, &rs, &opts)?;
            let limits = asymptotic_limits(target.m, alpha)?;
            out.push_str("r,k_c,y_star,y_star_star,pole,x_star\n");
            for p in points {
                let yss = p.y_star_star.map_or(String::new(), |y| y.to_string());
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    p.r, p.k_c, p.y_star, yss, p.pole, limits.y_star_limit
                )
                .unwrap();
            }
        }
        CurveKind::PhiGrowth => {
            let spec = sweep
                .ok_or_else(|| CliError::Validation("phi-growth requires --sweep".into()))?;
            let ks = integer_sweep(&parse_sweep(spec, 20, log_scale)?);
            let points = phi_growth_curve(&partition, cfg.observation.r, target.m, &ks, &opts)?;
            out.push_str("k,phi_star\n");
            for (k, phi) in points {
                writeln!(out, "{k},{phi}").unwrap();
            }
        }
        CurveKind::HTrace => {
            let obs = cfg.observation()?;
            let h = HContext::new(target.m, obs.k, obs.r)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            out.push_str("x,h\n");
            for i in 0..samples {
                let x = i as f64 / (samples - 1) as f64;
                if let Ok(value) = h.eval(x) {
                    writeln!(out, "{x},{value}").unwrap();
                }
            }
        }
    }
    Ok(out)
}

fn trace_csv(trace: &cbi_core::solver::IterateTrace) -> String {
    let n = trace.steps.first().map_or(0, |s| s.placement.len());
    let mut out = String::from("t,phi_hat");
    for i in 0..n {
        write!(out, ",x{i}").unwrap();
    }
    out.push('\n');
    for step in &trace.steps {
        write!(out, "{},{}", step.t, step.phi_hat).unwrap();
        for x in &step.placement {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    write!(
        out,
        "# converged={} monotone_after_first={}",
        trace.converged, trace.monotone_after_first
    )
    .unwrap();
    out
}

fn cmd_trace(cli: &Cli, start: Option<f64>) -> Result<String, CliError> {
    let cfg = load_config(cli)?;
    let partition = cfg.partition()?;
    let obs = cfg.observation()?;
    let target = cfg.target()?;
    let mut opts = cfg.solver_options();
    if let Some(start) = start {
        opts.start = start;
    }
    let trace = iterate_trace(&partition, &obs, target.m, &opts)?;
    if cli.json {
        return Ok(format!("{}\n", serde_json::to_string_pretty(&trace).unwrap()));
    }
    Ok(format!("{}\n", trace_csv(&trace)))
}

#[derive(Serialize)]
struct OracleReport {
    phi: f64,
    placement: Vec<f64>,
}

fn cmd_oracle(cli: &Cli, density: Option<usize>, levels: Option<usize>) -> Result<String, CliError> {
    let cfg = load_config(cli)?;
    let partition = cfg.partition()?;
    let obs = cfg.observation()?;
    let target = cfg.target()?;
    let kind = cfg.objective_kind()?;
    let mut opts = GridOptions::default();
    if let Some(d) = density {
        opts.density = d;
    }
    if let Some(l) = levels {
        opts.levels = l;
    }
    let sol = grid_minimize(&partition, kind, obs.r, obs.k, target.m, &opts)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    if cli.json {
        let report = OracleReport {
            phi: sol.phi,
            placement: sol.placement.clone(),
        };
        return Ok(format!("{}\n", serde_json::to_string_pretty(&report).unwrap()));
    }
    let mut out = String::new();
    writeln!(out, "phi {}", sol.phi).unwrap();
    writeln!(out, "placement {:?}", sol.placement).unwrap();
    Ok(out)
}
