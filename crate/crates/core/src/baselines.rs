//! Comparison methods sharing the iMELa trace interface: the inexact proximal
//! point penalty method (iPPP), the single-loop smoothed proximal Lagrangian
//! method (SP-LM) and the switching subgradient method (SSG).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::imela::{dual_step, z_step, INNER_TOL_DIVISOR};
use crate::inner::{apg_solve, build_penalty, ProxLagrangian, DEFAULT_MAX_INNER_STEPS};
use crate::problem::{OracleCounter, ProblemInstance, SmoothOracle};
use crate::trace::{make_record, Branch, Budget, Method, RowInfo, SolverTrace};
use crate::Scalar;

fn start_point<T: Scalar>(instance: &ProblemInstance<T>, x0: Option<&[T]>) -> Result<Vec<T>> {
    let start = x0.unwrap_or(&instance.constants.x_feas);
    check_dim(instance.dim(), start.len())?;
    Ok(instance.set.project(start))
}

fn elapsed_ms(clock: &Instant) -> f64 {
    clock.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IPPPParams<T> {
    /// Base penalty; `rho_t = rho sqrt(t + 1)`.
    pub rho: T,
    /// Proximal parameter (constant), `p > L`.
    pub p: T,
    pub budget: Budget,
    pub inner_step: Option<T>,
    pub max_inner_steps: usize,
    pub x0: Option<Vec<T>>,
}

impl<T: Scalar> IPPPParams<T> {
    /// `p = 2L`, 1000 outer iterations.
    pub fn new(rho: T, l: T) -> Self {
        Self {
            rho,
            p: T::lit(2.0) * l,
            budget: Budget::Outer(1000),
            inner_step: None,
            max_inner_steps: DEFAULT_MAX_INNER_STEPS,
            x0: None,
        }
    }
}

/// `rho sqrt(t + 1)`
pub fn ippp_rho<T: Scalar>(rho: T, t: usize) -> T {
    rho * T::from_usize_lossy(t + 1).sqrt()
}

/// `1 / (rho_t (t + 1))`
pub fn ippp_eps<T: Scalar>(rho: T, t: usize) -> T {
    T::one() / (ippp_rho(rho, t) * T::from_usize_lossy(t + 1))
}

/// At iteration `t` solves `min f + (rho_t/2) sum [g_i]_+^2 + (p/2)||u - x^(t)||^2`
/// by APG from `x^(t)` and reports `lambda^(t+1) = rho_t [g(x^(t+1))]_+`.
pub fn ippp_run<T: Scalar>(
    instance: &ProblemInstance<T>,
    params: &IPPPParams<T>,
    counter: &mut OracleCounter,
) -> Result<SolverTrace<T>> {
    let l = instance.smoothness()?;
    if !(params.rho > T::zero()) {
        return Err(Error::Config(format!("rho must be positive, got {}", params.rho)));
    }
    if !(params.p > l) {
        return Err(Error::Config(format!("p = {} must exceed L = {l}", params.p)));
    }
    let clock = Instant::now();
    let base = *counter;
    let m = instance.num_constraints();
    let mut trace = SolverTrace::new(Method::Ippp);
    let mut x = start_point(instance, params.x0.as_deref())?;
    trace.records.push(make_record(
        instance,
        x.clone(),
        Some(vec![T::zero(); m]),
        RowInfo { inner_converged: true, ..Default::default() },
    )?);
    let mut t = 0usize;
    while !params.budget.exhausted(t, counter.steps - base.steps) {
        let rho_t = ippp_rho(params.rho, t);
        let eps_t = ippp_eps(params.rho, t);
        let sub = build_penalty(instance, &x, rho_t, params.p)?.with_step(params.inner_step);
        let res = apg_solve(&sub, eps_t / T::lit(INNER_TOL_DIVISOR), params.max_inner_steps, counter)?;
        if !res.converged {
            trace.inner_failures += 1;
        }
        x = res.x;
        t += 1;
        let lambda: Vec<T> = instance.constraint_values(&x).iter().map(|g| rho_t * g.pos()).collect();
        trace.records.push(make_record(
            instance,
            x.clone(),
            Some(lambda),
            RowInfo {
                t,
                inner_steps: res.steps,
                cum_oracle: counter.steps - base.steps,
                inner_converged: res.converged,
                eps: Some(eps_t),
                wall_ms: elapsed_ms(&clock),
                ..Default::default()
            },
        )?);
    }
    trace.counter = counter.since(&base);
    Ok(trace)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SPLMParams<T> {
    /// Primal step size.
    pub eta: T,
    pub tau: T,
    pub theta: T,
    pub p: T,
    pub budget: Budget,
    pub x0: Option<Vec<T>>,
}

/// Per iteration: `lambda <- [lambda + tau g(x)]_+`, one projected gradient
/// step on `L_p(., z, lambda)` at `x`, then `z <- z + theta (x - z)`.
pub fn splm_run<T: Scalar>(
    instance: &ProblemInstance<T>,
    params: &SPLMParams<T>,
    counter: &mut OracleCounter,
) -> Result<SolverTrace<T>> {
    let l = instance.smoothness()?;
    if !(params.p > l) {
        return Err(Error::Config(format!("p = {} must exceed L = {l}", params.p)));
    }
    if !(params.eta > T::zero() && params.tau > T::zero()) {
        return Err(Error::Config("eta and tau must be positive".into()));
    }
    if !(params.theta > T::zero() && params.theta <= T::one()) {
        return Err(Error::Config(format!("theta must lie in (0, 1], got {}", params.theta)));
    }
    let clock = Instant::now();
    let base = *counter;
    let m = instance.num_constraints();
    let mut trace = SolverTrace::new(Method::Splm);
    let mut x = start_point(instance, params.x0.as_deref())?;
    let mut z = x.clone();
    let mut lambda = vec![T::zero(); m];
    trace.records.push(make_record(
        instance,
        x.clone(),
        Some(lambda.clone()),
        RowInfo { inner_converged: true, z: Some(z.clone()), ..Default::default() },
    )?);
    let mut t = 0usize;
    while !params.budget.exhausted(t, counter.steps - base.steps) {
        lambda = dual_step(&lambda, &instance.constraint_values(&x), params.tau);
        let lp = ProxLagrangian { instance, center: z.clone(), lambda: lambda.clone(), p: params.p };
        let (_, grad) = lp.eval(&x);
        counter.objective_grads += 1;
        counter.constraint_grads += u64::from(m > 0);
        counter.projections += 1;
        counter.steps += 1;
        let step: Vec<T> = x.iter().zip(&grad).map(|(&xi, &gi)| xi - params.eta * gi).collect();
        x = instance.set.project(&step);
        z = z_step(&z, &x, params.theta)?;
        t += 1;
        trace.records.push(make_record(
            instance,
            x.clone(),
            Some(lambda.clone()),
            RowInfo {
                t,
                inner_steps: 1,
                cum_oracle: counter.steps - base.steps,
                inner_converged: true,
                z: Some(z.clone()),
                wall_ms: elapsed_ms(&clock),
                ..Default::default()
            },
        )?);
    }
    trace.counter = counter.since(&base);
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SsgSchedule<T> {
    Static { eps: T, eta: T },
    /// `eps_t = e1 / sqrt(t + 1)`, `eta_t = e2 / sqrt(t + 1)`.
    Diminishing { e1: T, e2: T },
}

impl<T: Scalar> SsgSchedule<T> {
    /// `(eps_t, eta_t)`
    pub fn at(&self, t: usize) -> (T, T) {
        match *self {
            SsgSchedule::Static { eps, eta } => (eps, eta),
            SsgSchedule::Diminishing { e1, e2 } => {
                let s = T::from_usize_lossy(t + 1).sqrt();
                (e1 / s, e2 / s)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = match *self {
            SsgSchedule::Static { eps, eta } => (eps, eta),
            SsgSchedule::Diminishing { e1, e2 } => (e1, e2),
        };
        if a > T::zero() && b > T::zero() {
            Ok(())
        } else {
            Err(Error::Config("switching schedule parameters must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SSGParams<T> {
    pub schedule: SsgSchedule<T>,
    pub budget: Budget,
    pub x0: Option<Vec<T>>,
}

/// Objective step when `max_i g_i(x) <= eps_t`, otherwise a step along the
/// gradient of the most violated constraint (lowest index among ties).
/// Each row records the branch and `eps_t` of the step that produced it.
pub fn ssg_run<T: Scalar>(
    instance: &ProblemInstance<T>,
    params: &SSGParams<T>,
    counter: &mut OracleCounter,
) -> Result<SolverTrace<T>> {
    params.schedule.validate()?;
    let clock = Instant::now();
    let base = *counter;
    let mut trace = SolverTrace::new(Method::Ssg);
    let mut x = start_point(instance, params.x0.as_deref())?;
    trace.records.push(make_record(instance, x.clone(), None, RowInfo { inner_converged: true, ..Default::default() })?);
    let mut t = 0usize;
    while !params.budget.exhausted(t, counter.steps - base.steps) {
        let (eps_t, eta_t) = params.schedule.at(t);
        let g = instance.constraint_values(&x);
        let mut worst: Option<(usize, T)> = None;
        for (i, &gi) in g.iter().enumerate() {
            if worst.map_or(true, |(_, w)| gi > w) {
                worst = Some((i, gi));
            }
        }
        let (branch, dir) = match worst {
            Some((j, gj)) if !(gj <= eps_t) => {
                counter.constraint_grads += 1;
                (Branch::Constraint, instance.constraints[j].eval(&x).1)
            }
            _ => {
                counter.objective_grads += 1;
                (Branch::Objective, instance.objective.eval(&x).1)
            }
        };
        counter.projections += 1;
        counter.steps += 1;
        let step: Vec<T> = x.iter().zip(&dir).map(|(&xi, &di)| xi - eta_t * di).collect();
        x = instance.set.project(&step);
        t += 1;
        trace.records.push(make_record(
            instance,
            x.clone(),
            None,
            RowInfo {
                t,
                inner_steps: 1,
                cum_oracle: counter.steps - base.steps,
                inner_converged: true,
                eps: Some(eps_t),
                branch: Some(branch),
                wall_ms: elapsed_ms(&clock),
                ..Default::default()
            },
        )?);
    }
    trace.counter = counter.since(&base);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imela::{self, default_params};
    use crate::kkt::{best_iterate, Selection};
    use crate::linalg::{dist, norm};
    use crate::test_problems::{counterexample, disk, halfplane, interior_optimum};

    #[test]
    fn schedule_formulas() {
        assert_eq!(ippp_rho(200.0, 3), 400.0);
        assert_eq!(ippp_eps(200.0, 3), 6.25e-4);
        let (e, h) = SsgSchedule::Diminishing { e1: 1e-4, e2: 0.1 }.at(3);
        assert_eq!((e, h), (5e-5, 0.05));
        assert_eq!(SsgSchedule::Static { eps: 1e-6, eta: 2e-4 }.at(99), (1e-6, 2e-4));
    }

    #[test]
    fn ippp_multiplier_identity_and_convergence() {
        let ce = counterexample();
        let inst = &ce.instance;
        let mut params = IPPPParams::new(200.0, 2.0);
        params.budget = Budget::Outer(200);
        params.x0 = Some(vec![1.0, 0.0]);
        let tr = ippp_run(inst, &params, &mut OracleCounter::new()).unwrap();
        for r in &tr.records[1..] {
            let rho_prev = ippp_rho(200.0, r.t - 1);
            let expect: Vec<f64> = inst.constraint_values(&r.x).iter().map(|g| rho_prev * g.max(0.0)).collect();
            assert_eq!(r.lambda, expect);
            if inst.constraint_values(&r.x)[0] <= 0.0 {
                assert_eq!(r.lambda, vec![0.0]);
            }
        }
        assert!(norm(&tr.last().unwrap().x) <= 1e-2);
        let steps: u64 = tr.records.iter().map(|r| r.inner_steps as u64).sum();
        assert_eq!(tr.counter.steps, steps);
    }

    #[test]
    fn splm_one_step_by_hand() {
        let ce = counterexample();
        let params = SPLMParams { eta: 0.1, tau: 1.0, theta: 0.5, p: 5.0, budget: Budget::Outer(1), x0: Some(vec![1.0, 0.0]) };
        let tr = splm_run(&ce.instance, &params, &mut OracleCounter::new()).unwrap();
        assert_eq!(tr.records[1].lambda, vec![0.0]);
        assert!(dist(&tr.records[1].x, &[0.6, 0.0]) < 1e-15);
        assert_eq!(tr.counter.steps, 1);
    }

    #[test]
    fn splm_tiny_step_barely_moves() {
        let ce = counterexample();
        let params = SPLMParams { eta: 1e-12, tau: 1.0, theta: 0.5, p: 5.0, budget: Budget::Outer(3), x0: Some(vec![1.0, 0.5]) };
        let tr = splm_run(&ce.instance, &params, &mut OracleCounter::new()).unwrap();
        assert!(dist(&tr.last().unwrap().x, &[1.0, 0.5]) < 1e-10);
    }

    #[test]
    fn splm_reaches_the_counterexample_kkt_point() {
        let ce = counterexample();
        let params = SPLMParams { eta: 0.1, tau: 0.5, theta: 0.5, p: 4.0, budget: Budget::Outer(3000), x0: Some(vec![1.0, 0.0]) };
        let tr = splm_run(&ce.instance, &params, &mut OracleCounter::new()).unwrap();
        assert!(norm(&tr.last().unwrap().x) <= 1e-3);
    }

    #[test]
    fn ssg_branch_rule() {
        let inst = crate::test_problems::penalty_box_variant();
        // g(x) = -x1 = 0.01 <= 0.02 -> objective step.
        let p = SSGParams { schedule: SsgSchedule::Static { eps: 0.02, eta: 0.1 }, budget: Budget::Outer(1), x0: Some(vec![-0.01, 0.0]) };
        let tr = ssg_run(&inst, &p, &mut OracleCounter::new()).unwrap();
        assert_eq!(tr.records[1].branch, Some(Branch::Objective));
        // g(x) = 0.05 > 0.02 -> step along grad g = (-1, 0).
        let p = SSGParams { x0: Some(vec![-0.05, 0.3]), ..p };
        let tr = ssg_run(&inst, &p, &mut OracleCounter::new()).unwrap();
        assert_eq!(tr.records[1].branch, Some(Branch::Constraint));
        assert!(dist(&tr.records[1].x, &[0.05, 0.3]) < 1e-15);
        assert!(tr.records.iter().all(|r| r.stationarity.is_none() && r.comp_slack.is_none()));
    }

    #[test]
    fn ssg_switching_audit() {
        let inst = crate::test_problems::penalty_box_variant();
        let p = SSGParams { schedule: SsgSchedule::Diminishing { e1: 1e-2, e2: 0.2 }, budget: Budget::Outer(2000), x0: Some(vec![-1.0, 1.0]) };
        let tr = ssg_run(&inst, &p, &mut OracleCounter::new()).unwrap();
        for w in tr.records.windows(2) {
            if w[1].branch == Some(Branch::Objective) {
                assert!(w[0].max_constraint <= w[1].eps.unwrap());
            }
        }
        let b = best_iterate(&tr, Selection::Feasible { feas_slack: 1e-3 }).unwrap();
        assert!(norm(&tr.records[b].x) <= 0.1);
    }

    #[test]
    fn all_methods_agree_on_convex_instances() {
        for ai in [interior_optimum(), halfplane(), disk()] {
            let inst = &ai.instance;
            let xs = &ai.kkt_points[0].0;
            let mut ip = default_params(&inst.constants, 4.0, 1).unwrap();
            ip.budget = Budget::Outer(2000);
            let a = imela::run(inst, &ip, &mut OracleCounter::new()).unwrap();
            let mut pp = IPPPParams::new(200.0, 2.0);
            pp.budget = Budget::Outer(300);
            let b = ippp_run(inst, &pp, &mut OracleCounter::new()).unwrap();
            let sp = SPLMParams { eta: 0.05, tau: ip.tau, theta: 0.5, p: 4.0, budget: Budget::Outer(20_000), x0: None };
            let c = splm_run(inst, &sp, &mut OracleCounter::new()).unwrap();
            let sg = SSGParams { schedule: SsgSchedule::Diminishing { e1: 1e-3, e2: 0.1 }, budget: Budget::Outer(20_000), x0: None };
            let d = ssg_run(inst, &sg, &mut OracleCounter::new()).unwrap();
            for tr in [&a, &b, &c] {
                let i = best_iterate(tr, Selection::PrimalDual).unwrap();
                assert!(dist(&tr.records[i].x, xs) <= 1e-2, "{:?}: {:?} vs {xs:?}", tr.method, tr.records[i].x);
            }
            let i = best_iterate(&d, Selection::Feasible { feas_slack: 1e-5 }).unwrap();
            assert!(dist(&d.records[i].x, xs) <= 1e-2, "ssg: {:?} vs {xs:?}", d.records[i].x);
        }
    }
}
