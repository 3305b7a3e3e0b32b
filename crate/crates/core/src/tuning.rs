//! Grid tuning with step-matched budgets.
//!
//! Single-loop methods (SP-LM, SSG) are tuned for `T` outer iterations.
//! Double-loop methods (iMELa, iPPP) run until the accumulated number of inner
//! steps first reaches `T`. Each candidate is scored by the smallest residual
//! sum along its trace (or, for SSG, the smallest objective among nearly
//! feasible iterates). The winner is then rerun with four times the budget.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ippp_run, splm_run, ssg_run, IPPPParams, SPLMParams, SSGParams, SsgSchedule};
use crate::error::{Error, Result};
use crate::imela::{self, IMELaParams};
use crate::inner::DEFAULT_MAX_INNER_STEPS;
use crate::kkt::{best_iterate, Selection};
use crate::problem::{OracleCounter, ProblemInstance};
use crate::trace::{Budget, Method, SolverTrace};
use crate::Scalar;

/// Final runs use this multiple of the tuning budget.
pub const FINAL_BUDGET_FACTOR: u64 = 4;

/// Named numeric parameters of one run, e.g. `tau=10, theta=0.5`.
pub type ParamSet = BTreeMap<String, f64>;

/// Fully resolved parameters of one of the four methods.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodParams<T> {
    Imela(IMELaParams<T>),
    Ippp(IPPPParams<T>),
    Splm(SPLMParams<T>),
    Ssg(SSGParams<T>),
}

impl<T: Scalar> MethodParams<T> {
    pub fn method(&self) -> Method {
        match self {
            MethodParams::Imela(_) => Method::Imela,
            MethodParams::Ippp(_) => Method::Ippp,
            MethodParams::Splm(_) => Method::Splm,
            MethodParams::Ssg(_) => Method::Ssg,
        }
    }

    pub fn budget(&self) -> Budget {
        match self {
            MethodParams::Imela(p) => p.budget,
            MethodParams::Ippp(p) => p.budget,
            MethodParams::Splm(p) => p.budget,
            MethodParams::Ssg(p) => p.budget,
        }
    }

    pub fn set_budget(&mut self, budget: Budget) {
        match self {
            MethodParams::Imela(p) => p.budget = budget,
            MethodParams::Ippp(p) => p.budget = budget,
            MethodParams::Splm(p) => p.budget = budget,
            MethodParams::Ssg(p) => p.budget = budget,
        }
    }

    /// Caps every inner solve of a double-loop method.
    pub fn set_max_inner_steps(&mut self, cap: usize) {
        match self {
            MethodParams::Imela(p) => p.max_inner_steps = cap,
            MethodParams::Ippp(p) => p.max_inner_steps = cap,
            _ => {}
        }
    }
}

/// Parameter names accepted by each method.
pub fn param_keys(method: Method) -> &'static [&'static str] {
    match method {
        Method::Imela => &["p", "tau", "theta", "c", "eta", "eps_target", "max_inner"],
        Method::Ippp => &["rho", "p", "eta", "max_inner"],
        Method::Splm => &["eta", "tau", "theta", "p"],
        Method::Ssg => &["eps", "eta", "e1", "e2"],
    }
}

fn check_keys(method: Method, params: &ParamSet) -> Result<()> {
    let keys = param_keys(method);
    for k in params.keys() {
        if !keys.contains(&k.as_str()) {
            return Err(Error::Config(format!("unknown parameter '{k}' for {method} (expected one of {})", keys.join(", "))));
        }
    }
    if method == Method::Ssg {
        let stat = params.contains_key("eps") || params.contains_key("eta");
        let dim = params.contains_key("e1") || params.contains_key("e2");
        if stat && dim {
            return Err(Error::Config("ssg takes either eps/eta (static) or e1/e2 (diminishing)".into()));
        }
    }
    Ok(())
}

fn count(v: f64, key: &str) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{key} must be a positive integer, got {v}")))
    }
}

/// Builds the parameters of `method` on `instance` from `params`; missing
/// entries take defaults (`p = 2L`, the theory `tau`, `theta = 0.5`, `c = 1`,
/// `rho = 500`, SP-LM `eta = 1 / (4L)`, static SSG with `eps = 1e-5`, `eta = 1e-3`).
pub fn build_params<T: Scalar>(
    instance: &ProblemInstance<T>,
    method: Method,
    params: &ParamSet,
    budget: Budget,
) -> Result<MethodParams<T>> {
    check_keys(method, params)?;
    let l = instance.smoothness()?;
    let get = |k: &str| params.get(k).map(|&v| T::lit(v));
    let p = get("p").unwrap_or(T::lit(2.0) * l);
    let out = match method {
        Method::Imela => {
            let mut q = imela::default_params(&instance.constants, p, instance.num_constraints())?;
            if let Some(v) = get("tau") {
                q.tau = v;
            }
            if let Some(v) = get("theta") {
                q.theta = v;
            }
            if let Some(v) = get("c") {
                q.c = v;
            }
            q.inner_step = get("eta");
            q.eps_target = get("eps_target");
            if let Some(&v) = params.get("max_inner") {
                q.max_inner_steps = count(v, "max_inner")?;
            }
            q.budget = budget;
            q.validate(l)?;
            MethodParams::Imela(q)
        }
        Method::Ippp => {
            let mut q = IPPPParams::new(get("rho").unwrap_or(T::lit(500.0)), l);
            q.p = p;
            q.inner_step = get("eta");
            if let Some(&v) = params.get("max_inner") {
                q.max_inner_steps = count(v, "max_inner")?;
            }
            q.budget = budget;
            MethodParams::Ippp(q)
        }
        Method::Splm => {
            let d = imela::default_params(&instance.constants, p, instance.num_constraints())?;
            MethodParams::Splm(SPLMParams {
                eta: get("eta").unwrap_or(T::one() / (T::lit(4.0) * l)),
                tau: get("tau").unwrap_or(d.tau),
                theta: get("theta").unwrap_or(d.theta),
                p,
                budget,
                x0: None,
            })
        }
        Method::Ssg => {
            let schedule = if params.contains_key("e1") || params.contains_key("e2") {
                SsgSchedule::Diminishing {
                    e1: get("e1").unwrap_or(T::lit(1e-4)),
                    e2: get("e2").unwrap_or(T::lit(0.05)),
                }
            } else {
                SsgSchedule::Static {
                    eps: get("eps").unwrap_or(T::lit(1e-5)),
                    eta: get("eta").unwrap_or(T::lit(1e-3)),
                }
            };
            MethodParams::Ssg(SSGParams { schedule, budget, x0: None })
        }
    };
    Ok(out)
}

/// Runs `params` on `instance` with a fresh counter.
pub fn run_method<T: Scalar>(instance: &ProblemInstance<T>, params: &MethodParams<T>) -> Result<SolverTrace<T>> {
    let mut counter = OracleCounter::new();
    match params {
        MethodParams::Imela(p) => imela::run(instance, p, &mut counter),
        MethodParams::Ippp(p) => ippp_run(instance, p, &mut counter),
        MethodParams::Splm(p) => splm_run(instance, p, &mut counter),
        MethodParams::Ssg(p) => ssg_run(instance, p, &mut counter),
    }
}

/// Union of Cartesian products. Each block maps parameter names to values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub blocks: Vec<Vec<(String, Vec<f64>)>>,
}

impl Grid {
    pub fn single(params: &ParamSet) -> Self {
        Self { blocks: vec![params.iter().map(|(k, &v)| (k.clone(), vec![v])).collect()] }
    }

    /// Replaces the values of `key` in every block that has it; adds it to
    /// every block when none has it.
    pub fn set(&mut self, key: &str, values: Vec<f64>) {
        let mut found = false;
        for b in &mut self.blocks {
            if let Some(e) = b.iter_mut().find(|(k, _)| k == key) {
                e.1 = values.clone();
                found = true;
            }
        }
        if !found {
            if self.blocks.is_empty() {
                self.blocks.push(Vec::new());
            }
            for b in &mut self.blocks {
                b.push((key.to_string(), values.clone()));
            }
        }
    }

    /// All grid points in a fixed order.
    pub fn candidates(&self) -> Result<Vec<ParamSet>> {
        let mut out = Vec::new();
        for block in &self.blocks {
            let mut acc: Vec<ParamSet> = vec![ParamSet::new()];
            for (k, vals) in block {
                if vals.is_empty() {
                    return Err(Error::Config(format!("grid for '{k}' is empty")));
                }
                acc = acc
                    .into_iter()
                    .flat_map(|base| {
                        vals.iter().map(move |&v| {
                            let mut s = base.clone();
                            s.insert(k.clone(), v);
                            s
                        })
                    })
                    .collect();
            }
            out.extend(acc);
        }
        if out.is_empty() {
            return Err(Error::Config("empty tuning grid".into()));
        }
        Ok(out)
    }
}

/// Inner/primal step grid: small steps for `L >= 5`, larger ones otherwise.
pub fn default_step_grid(l: f64) -> Vec<f64> {
    if l >= 5.0 {
        vec![0.005, 0.01, 0.02, 0.05]
    } else {
        vec![0.02, 0.05, 0.1, 0.2]
    }
}

/// Default grid of `method` for a problem with smoothness `l`.
pub fn default_grid(method: Method, l: f64) -> Grid {
    let s = |k: &str, v: &[f64]| (k.to_string(), v.to_vec());
    let tau = [5.0, 10.0, 20.0, 50.0];
    let theta = [0.5, 0.75, 1.0];
    let eta = default_step_grid(l);
    let blocks = match method {
        Method::Imela => vec![vec![s("tau", &tau), s("theta", &theta), s("c", &[1.0, 2.0, 5.0, 10.0]), s("eta", &eta)]],
        Method::Ippp => vec![vec![s("rho", &[200.0, 500.0, 1000.0, 1500.0]), s("eta", &eta)]],
        Method::Splm => vec![vec![s("eta", &eta), s("tau", &tau), s("theta", &theta)]],
        Method::Ssg => vec![
            vec![s("eps", &[1e-6, 2e-6, 5e-6, 1e-5]), s("eta", &[2e-4, 5e-4, 1e-3, 2e-3])],
            vec![s("e1", &[5e-5, 1e-4, 2e-4, 5e-4]), s("e2", &[0.02, 0.05, 0.1, 0.2])],
        ],
    };
    Grid { blocks }
}

/// Tuning budget of `method`: outer iterations or accumulated inner steps.
pub fn tuning_budget(method: Method, t_tuning: u64) -> Budget {
    if method.is_double_loop() {
        Budget::Steps(t_tuning)
    } else {
        Budget::Outer(t_tuning as usize)
    }
}

/// How candidates are ranked.
pub fn selection(method: Method) -> Selection {
    if method.has_multipliers() {
        Selection::PrimalDual
    } else {
        Selection::feasible()
    }
}

/// Score of the best iterate of `trace` (lower is better).
pub fn trace_score<T: Scalar>(trace: &SolverTrace<T>) -> Result<(usize, f64)> {
    let mode = selection(trace.method);
    let i = best_iterate(trace, mode)?;
    let r = &trace.records[i];
    let s = match mode {
        Selection::PrimalDual => r.residual_sum().map_or(f64::INFINITY, |v| v.as_f64()),
        Selection::Feasible { .. } => r.objective.as_f64(),
    };
    Ok((i, if s.is_nan() { f64::INFINITY } else { s }))
}

#[derive(Debug, Clone, Serialize)]
pub struct CandidateResult {
    pub id: usize,
    pub params: ParamSet,
    /// `+inf` when the run failed or produced no usable iterate.
    pub score: f64,
    pub best_index: Option<usize>,
    pub outer_iterations: usize,
    pub total_steps: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuningReport {
    pub method: Method,
    pub t_tuning: u64,
    pub candidates: Vec<CandidateResult>,
    /// Index into `candidates` of the winner (lowest score, then lowest id).
    pub best: Option<usize>,
}

impl TuningReport {
    pub fn winner(&self) -> Option<&CandidateResult> {
        self.best.map(|i| &self.candidates[i])
    }
}

impl fmt::Display for TuningReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} tuning, T = {}", self.method, self.t_tuning)?;
        for c in &self.candidates {
            let params: Vec<String> = c.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let mark = if Some(c.id) == self.winner().map(|w| w.id) { "*" } else { " " };
            match &c.error {
                Some(e) => writeln!(f, "{mark} {:>4} {:<40} failed: {e}", c.id, params.join(" "))?,
                None => writeln!(f, "{mark} {:>4} {:<40} {:.6e}", c.id, params.join(" "), c.score)?,
            }
        }
        Ok(())
    }
}

fn run_candidate<T: Scalar>(
    instance: &ProblemInstance<T>,
    method: Method,
    base: &ParamSet,
    id: usize,
    point: ParamSet,
    t_tuning: u64,
) -> CandidateResult {
    let mut params = base.clone();
    params.extend(point.iter().map(|(k, v)| (k.clone(), *v)));
    let outcome = build_params(instance, method, &params, tuning_budget(method, t_tuning)).and_then(|mut mp| {
        if method.is_double_loop() && !params.contains_key("max_inner") {
            mp.set_max_inner_steps(usize::try_from(t_tuning).unwrap_or(usize::MAX).min(DEFAULT_MAX_INNER_STEPS));
        }
        let trace = run_method(instance, &mp)?;
        let (i, s) = trace_score(&trace)?;
        Ok((trace, i, s))
    });
    match outcome {
        Ok((trace, i, s)) => CandidateResult {
            id,
            params,
            score: s,
            best_index: Some(i),
            outer_iterations: trace.outer_iterations(),
            total_steps: trace.total_steps(),
            error: None,
        },
        Err(e) => CandidateResult {
            id,
            params,
            score: f64::INFINITY,
            best_index: None,
            outer_iterations: 0,
            total_steps: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every grid point (in parallel) with the tuning budget. `base` holds
/// fixed parameters that grid points override. Failed candidates score `+inf`.
pub fn tune<T: Scalar>(
    instance: &ProblemInstance<T>,
    method: Method,
    base: &ParamSet,
    grid: &Grid,
    t_tuning: u64,
) -> Result<TuningReport> {
    if t_tuning == 0 {
        return Err(Error::Config("tuning budget must be positive".into()));
    }
    let points = grid.candidates()?;
    let candidates: Vec<CandidateResult> = points
        .into_par_iter()
        .enumerate()
        .map(|(id, point)| run_candidate(instance, method, base, id, point, t_tuning))
        .collect();
    let best = candidates
        .iter()
        .filter(|c| c.error.is_none() && c.score.is_finite())
        .min_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)))
        .map(|c| c.id);
    Ok(TuningReport { method, t_tuning, candidates, best })
}

/// Budget of the final run: `4 T` outer iterations for single-loop methods,
/// `4 x` the inner steps the winner used during tuning for double-loop ones.
pub fn final_budget(method: Method, t_tuning: u64, winner_steps: u64) -> Budget {
    if method.is_double_loop() {
        Budget::Steps(FINAL_BUDGET_FACTOR * winner_steps.max(t_tuning))
    } else {
        Budget::Outer((FINAL_BUDGET_FACTOR * t_tuning) as usize)
    }
}

/// Tunes, then reruns the winner with the final budget.
pub fn tune_and_run<T: Scalar>(
    instance: &ProblemInstance<T>,
    method: Method,
    base: &ParamSet,
    grid: &Grid,
    t_tuning: u64,
) -> Result<(TuningReport, MethodParams<T>, SolverTrace<T>)> {
    let report = tune(instance, method, base, grid, t_tuning)?;
    let winner = report
        .winner()
        .ok_or_else(|| Error::Budget(format!("every {method} candidate failed")))?;
    let budget = final_budget(method, t_tuning, winner.total_steps);
    let mut params = build_params(instance, method, &winner.params, budget)?;
    if method.is_double_loop() && !winner.params.contains_key("max_inner") {
        if let Budget::Steps(s) = budget {
            params.set_max_inner_steps(usize::try_from(s).unwrap_or(usize::MAX).min(DEFAULT_MAX_INNER_STEPS));
        }
    }
    let trace = run_method(instance, &params)?;
    Ok((report, params, trace))
}
