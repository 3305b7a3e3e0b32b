//! Command-line front end: `run`, `tune` and `report`.

pub mod trace_csv;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use imela_core::fairness::{self, FairnessConstants, GroupSpec};
use imela_core::imela::m_lambda_bound;
use imela_core::inner::a_priori_smoothness;
use imela_core::kkt::best_iterate;
use imela_core::test_problems::{builtin, random_polytope_problem, BUILTIN_NAMES};
use imela_core::tuning::{self, default_grid, Grid, MethodParams, ParamSet, TuningReport};
use imela_core::{Budget, Method, OracleCounter, Problem, Trace, TraceRecord};

pub const SUMMARY_SCHEMA: &str = "imela-summary v1";
pub const TUNING_SCHEMA: &str = "imela-tuning v1";

#[derive(Debug, Parser)]
#[command(name = "imela", version, about = "Constrained first-order solvers and benchmark harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one solver and write its trace (CSV) and summary (JSON).
    Run(RunArgs),
    /// Grid-tune a solver and write the best parameters (JSON).
    Tune(TuneArgs),
    /// Merge traces onto a shared oracle-count axis.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Built-in instance, `polytope`, `synthetic` or `fairness` (needs --data).
    #[arg(long, default_value = "counterexample")]
    pub problem: String,
    /// libsvm or CSV (`.csv`) dataset for the fairness problem.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Group column: CSV header name or 0-based feature index.
    #[arg(long)]
    pub group: Option<String>,
    /// l1-ball radius of the fairness problem.
    #[arg(long, default_value_t = fairness::DEFAULT_RADIUS)]
    pub radius: f64,
    /// Seed of the data split and of generated instances.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "imela")]
    pub method: Method,
    /// Method parameter, `key=value` (repeatable, or comma separated).
    #[arg(long = "params", value_name = "KEY=VAL")]
    pub params: Vec<String>,
    /// Outer iterations `N`, or `steps:N` for an inner-step budget.
    #[arg(long, default_value = "1000")]
    pub budget: String,
    /// Trace CSV path; the summary goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fill the wall-clock column (breaks byte-for-byte reproducibility).
    #[arg(long)]
    pub wall_clock: bool,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value = "imela")]
    pub method: Method,
    /// Fixed parameter, `key=value`.
    #[arg(long = "params", value_name = "KEY=VAL")]
    pub params: Vec<String>,
    /// Grid override, `key=v1,v2,...` (repeatable).
    #[arg(long = "grid", value_name = "KEY=V1,V2")]
    pub grid: Vec<String>,
    /// Tuning budget: outer iterations for single-loop methods, accumulated
    /// inner steps for double-loop methods.
    #[arg(long, default_value_t = 1000)]
    pub budget: u64,
    /// Output JSON path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rerun the winner with four times the budget and write its trace here.
    #[arg(long)]
    pub final_trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trace CSV files.
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A problem ready to solve.
pub struct LoadedProblem {
    pub name: String,
    pub instance: Problem,
    pub fairness: Option<FairnessConstants>,
}

pub fn load_problem(a: &ProblemArgs) -> Result<LoadedProblem> {
    let fair = |data: fairness::Dataset| -> Result<LoadedProblem> {
        let b = fairness::prepare_benchmark(&data, a.seed, a.radius, None)?;
        Ok(LoadedProblem { name: a.problem.clone(), instance: b.instance, fairness: Some(b.constants) })
    };
    match a.problem.as_str() {
        "fairness" => {
            let path = a.data.as_ref().ok_or_else(|| anyhow!("--problem fairness needs --data"))?;
            let group = a.group.as_deref().map(GroupSpec::parse);
            let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let data = if is_csv {
                fairness::load_csv(path, group.as_ref())
            } else {
                match group {
                    Some(GroupSpec::Index(g)) => fairness::load_libsvm(path).and_then(|d| d.with_group(g)),
                    _ => bail!("libsvm data needs --group <0-based feature index>"),
                }
            }
            .with_context(|| format!("loading {}", path.display()))?;
            fair(data)
        }
        "synthetic" => fair(fairness::synthetic_dataset(2000, 20, a.seed)?),
        "polytope" => Ok(LoadedProblem {
            name: a.problem.clone(),
            instance: random_polytope_problem(a.seed, 3)?,
            fairness: None,
        }),
        name => {
            let inst = builtin(name).map_err(|_| {
                anyhow!(
                    "unknown problem '{name}' (expected fairness, synthetic, polytope or one of {})",
                    BUILTIN_NAMES.join(", ")
                )
            })?;
            Ok(LoadedProblem { name: name.to_string(), instance: inst.instance, fairness: None })
        }
    }
}

/// Parses `key=value` items; each item may hold several comma-separated pairs.
pub fn parse_params(items: &[String]) -> Result<ParamSet> {
    let mut out = ParamSet::new();
    for item in items {
        for pair in item.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| anyhow!("expected key=value, got '{pair}'"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("parameter '{k}'"))?;
            out.insert(k.trim().to_string(), v);
        }
    }
    Ok(out)
}

/// Parses `key=v1,v2,...`.
pub fn parse_grid_item(item: &str) -> Result<(String, Vec<f64>)> {
    let (k, vals) = item.split_once('=').ok_or_else(|| anyhow!("expected key=v1,v2,..., got '{item}'"))?;
    let vals = vals
        .split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("grid '{k}'")))
        .collect::<Result<Vec<_>>>()?;
    if vals.is_empty() {
        bail!("grid '{k}' is empty");
    }
    Ok((k.trim().to_string(), vals))
}

pub fn parse_budget(s: &str) -> Result<Budget> {
    let s = s.trim();
    if let Some(n) = s.strip_prefix("steps:") {
        Ok(Budget::Steps(n.parse().context("step budget")?))
    } else {
        let n = s.strip_prefix("outer:").unwrap_or(s);
        Ok(Budget::Outer(n.parse().context("outer budget")?))
    }
}

#[derive(Debug, Serialize)]
pub struct RowSummary {
    pub t: usize,
    pub cum_oracle: u64,
    pub objective: f64,
    pub infeasibility: f64,
    pub stationarity: Option<f64>,
    pub comp_slack: Option<f64>,
    pub lambda_norm: Option<f64>,
}

impl From<&TraceRecord<f64>> for RowSummary {
    fn from(r: &TraceRecord<f64>) -> Self {
        Self {
            t: r.t,
            cum_oracle: r.cum_oracle,
            objective: r.objective,
            infeasibility: r.infeasibility,
            stationarity: r.stationarity,
            comp_slack: r.comp_slack,
            lambda_norm: r.lambda_norm,
        }
    }
}

/// Constants from the analysis, reported for auditing only.
#[derive(Debug, Serialize)]
pub struct APriori {
    /// Uniform multiplier bound for a constant dual step.
    pub m_lambda: Option<f64>,
    /// Smoothness of the proximal Lagrangian under that bound.
    pub inner_smoothness: Option<f64>,
    pub max_lambda_norm: f64,
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub schema: &'static str,
    pub problem: String,
    pub method: Method,
    pub seed: u64,
    pub params: MethodParams<f64>,
    pub outer_iterations: usize,
    pub total_steps: u64,
    pub counter: OracleCounter,
    pub stopped_early: bool,
    pub inner_failures: usize,
    pub best_index: Option<usize>,
    pub best: Option<RowSummary>,
    pub last: Option<RowSummary>,
    pub a_priori: APriori,
    pub fairness: Option<FairnessConstants>,
}

fn a_priori(instance: &Problem, params: &MethodParams<f64>, trace: &Trace) -> APriori {
    let (tau, p) = match params {
        MethodParams::Imela(q) => (Some(q.tau), q.p),
        MethodParams::Splm(q) => (Some(q.tau), q.p),
        MethodParams::Ippp(q) => (None, q.p),
        MethodParams::Ssg(_) => (None, 0.0),
    };
    let m_lambda = tau.and_then(|t| m_lambda_bound(&instance.constants, t, t, p).ok());
    let inner_smoothness = match (m_lambda, instance.smoothness()) {
        (Some(ml), Ok(l)) => Some(a_priori_smoothness(l, instance.num_constraints(), ml, p)),
        _ => None,
    };
    APriori { m_lambda, inner_smoothness, max_lambda_norm: trace.max_lambda_norm() }
}

pub fn summarize(problem: &LoadedProblem, seed: u64, params: &MethodParams<f64>, trace: &Trace) -> RunSummary {
    let best_index = best_iterate(trace, tuning::selection(trace.method)).ok();
    RunSummary {
        schema: SUMMARY_SCHEMA,
        problem: problem.name.clone(),
        method: trace.method,
        seed,
        params: params.clone(),
        outer_iterations: trace.outer_iterations(),
        total_steps: trace.total_steps(),
        counter: trace.counter,
        stopped_early: trace.stopped_early,
        inner_failures: trace.inner_failures,
        best_index,
        best: best_index.map(|i| (&trace.records[i]).into()),
        last: trace.last().map(Into::into),
        a_priori: a_priori(&problem.instance, params, trace),
        fairness: problem.fairness.clone(),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn summary_path(trace_path: &Path) -> PathBuf {
    trace_path.with_extension("json")
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let problem = load_problem(&a.problem)?;
    let params = tuning::build_params(&problem.instance, a.method, &parse_params(&a.params)?, parse_budget(&a.budget)?)?;
    let trace = tuning::run_method(&problem.instance, &params)?;
    let csv = trace_csv::render_trace(&trace, a.wall_clock);
    let summary = serde_json::to_string_pretty(&summarize(&problem, a.problem.seed, &params, &trace))? + "\n";
    match &a.out {
        Some(p) => {
            write_output(Some(p), &csv)?;
            write_output(Some(&summary_path(p)), &summary)?;
        }
        None => {
            write_output(None, &csv)?;
            eprint!("{summary}");
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct TuneOutput<'a> {
    pub schema: &'static str,
    pub problem: String,
    pub method: Method,
    pub t_tuning: u64,
    pub best_params: Option<&'a ParamSet>,
    pub best_score: Option<f64>,
    pub candidates: &'a TuningReport,
    pub final_run: Option<RunSummary>,
}

pub fn build_grid(method: Method, l: f64, overrides: &[String]) -> Result<Grid> {
    let mut grid = default_grid(method, l);
    for item in overrides {
        let (k, v) = parse_grid_item(item)?;
        grid.set(&k, v);
    }
    Ok(grid)
}

pub fn cmd_tune(a: &TuneArgs) -> Result<()> {
    let problem = load_problem(&a.problem)?;
    let l = problem.instance.smoothness()?;
    let grid = build_grid(a.method, l, &a.grid)?;
    let base = parse_params(&a.params)?;
    let report = tuning::tune(&problem.instance, a.method, &base, &grid, a.budget)?;
    eprint!("{report}");
    let winner = report.winner();
    let final_run = match (&a.final_trace, winner) {
        (Some(path), Some(w)) => {
            let budget = tuning::final_budget(a.method, a.budget, w.total_steps);
            let params = tuning::build_params(&problem.instance, a.method, &w.params, budget)?;
            let trace = tuning::run_method(&problem.instance, &params)?;
            write_output(Some(path), &trace_csv::render_trace(&trace, false))?;
            Some(summarize(&problem, a.problem.seed, &params, &trace))
        }
        (Some(_), None) => bail!("every candidate failed; no final run"),
        _ => None,
    };
    let out = TuneOutput {
        schema: TUNING_SCHEMA,
        problem: problem.name.clone(),
        method: a.method,
        t_tuning: a.budget,
        best_params: winner.map(|w| &w.params),
        best_score: winner.map(|w| w.score),
        candidates: &report,
        final_run,
    };
    write_output(a.out.as_deref(), &(serde_json::to_string_pretty(&out)? + "\n"))
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let tables = a
        .traces
        .iter()
        .map(|p| trace_csv::read_trace(p))
        .collect::<Result<Vec<_>>>()?;
    write_output(a.out.as_deref(), &trace_csv::merge_traces(&tables)?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Report(a) => cmd_report(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_and_budgets() {
        let p = parse_params(&["tau=2".into(), "theta=0.5,c=3".into()]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p["c"], 3.0);
        assert!(parse_params(&["tau".into()]).is_err());
        assert_eq!(parse_budget("steps:500").unwrap(), Budget::Steps(500));
        assert_eq!(parse_budget("20").unwrap(), Budget::Outer(20));
        assert!(parse_budget("many").is_err());
        assert_eq!(parse_grid_item("rho=1,2").unwrap(), ("rho".to_string(), vec![1.0, 2.0]));
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from(["imela", "run", "--method", "sp-lm", "--params", "eta=0.1", "--budget", "steps:10"]).unwrap();
        match cli.command {
            Command::Run(a) => {
                assert_eq!(a.method, Method::Splm);
                assert_eq!(a.problem.problem, "counterexample");
            }
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["imela", "run", "--method", "adam"]).is_err());
    }

    #[test]
    fn grid_overrides_apply() {
        let g = build_grid(Method::Ippp, 10.0, &["rho=100".into()]).unwrap();
        assert_eq!(g.candidates().unwrap().len(), 4);
    }
}
