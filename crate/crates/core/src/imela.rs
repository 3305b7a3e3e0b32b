//! Inexact Moreau envelope Lagrangian method.
//!
//! Starting from `x = z = P(x0)` and `lambda = 0`, every outer iteration
//!
//! 1. takes a projected dual ascent step `lambda <- [lambda + tau g(x)]_+`,
//! 2. approximately minimizes `L_p(., z, lambda) = f + lambda^T g + (p/2)||. - z||^2`
//!    over the set by APG, warm-started at `x`, to tolerance `eps_t = c/(t+1)`,
//! 3. moves the proximal center `z <- z + theta (x - z)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::inner::{apg_solve, build_prox_lagrangian, DEFAULT_MAX_INNER_STEPS};
use crate::linalg::{dot, lerp, norm};
use crate::problem::{OracleCounter, ProblemConstants, ProblemInstance};
use crate::trace::{make_record, Budget, Method, RowInfo, SolverTrace, TraceRecord};
use crate::Scalar;

/// Smallest inner tolerance ever requested.
pub const EPS_FLOOR: f64 = 1e-12;

/// Ratio between the outer tolerance `eps_t` and the gradient-mapping
/// tolerance handed to APG.
pub const INNER_TOL_DIVISOR: f64 = 3.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IMELaParams<T> {
    /// Proximal parameter, `p > L`.
    pub p: T,
    pub tau: T,
    pub theta: T,
    /// Inner tolerance scale in `eps_t = c / (t + 1)`.
    pub c: T,
    pub budget: Budget,
    /// Stop once `stat^2 + infeas^2 + cs^2 <= eps_target^2`.
    pub eps_target: Option<T>,
    /// APG step size; `1 / K_F` when unset.
    pub inner_step: Option<T>,
    pub max_inner_steps: usize,
    /// Starting point (projected); `x_feas` when unset.
    pub x0: Option<Vec<T>>,
}

impl<T: Scalar> IMELaParams<T> {
    pub fn validate(&self, l: T) -> Result<()> {
        if !(self.p > l) {
            return Err(Error::Config(format!("p = {} must exceed L = {l}", self.p)));
        }
        if !(self.tau > T::zero()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.theta > T::zero() && self.theta <= T::one()) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.c > T::zero()) {
            return Err(Error::Config(format!("c must be positive, got {}", self.c)));
        }
        if let Some(eta) = self.inner_step {
            if !(eta > T::zero()) {
                return Err(Error::Config(format!("inner step must be positive, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn eps(&self, t: usize) -> T {
        eps_schedule(self.c, t)
    }
}

/// `max(c / (t + 1), 1e-12)`.
pub fn eps_schedule<T: Scalar>(c: T, t: usize) -> T {
    (c / T::from_usize_lossy(t + 1)).max(T::lit(EPS_FLOOR))
}

/// `tau = (p - L) / (4 B_g^2)`, `theta = 0.5`, `c = 1`, 1000 outer iterations.
/// With `m = 0` the dual step is inert and `tau = 1`.
pub fn default_params<T: Scalar>(constants: &ProblemConstants<T>, p: T, m: usize) -> Result<IMELaParams<T>> {
    let l = constants.smoothness()?;
    if !(p > l) {
        return Err(Error::Config(format!("p = {p} must exceed L = {l}")));
    }
    let bg = constants.constraint_bound;
    let tau = if m == 0 {
        T::one()
    } else if bg > T::zero() {
        (p - l) / (T::lit(4.0) * bg * bg)
    } else {
        return Err(Error::Config("B_g must be positive when constraints are present".into()));
    };
    Ok(IMELaParams {
        p,
        tau,
        theta: T::lit(0.5),
        c: T::one(),
        budget: Budget::Outer(1000),
        eps_target: None,
        inner_step: None,
        max_inner_steps: DEFAULT_MAX_INNER_STEPS,
        x0: None,
    })
}

/// Averaging weight for which the potential provably decreases (up to the
/// inexactness term) on instances satisfying the error bound with benign
/// constants: `min((p - L) / (18 p), 6 p tau)`.
pub fn descent_theta<T: Scalar>(p: T, l: T, tau: T) -> T {
    ((p - l) / (T::lit(18.0) * p)).min(T::lit(6.0) * p * tau)
}

/// Uniform bound on `||lambda^(t)||` for step sizes in `[tau_lo, tau_hi]`:
/// `max(2 tau_hi B_g, 2 tau_hi (C + tau_hi B_g^2) / (2 tau_lo s))` with
/// `C = (B_f + p D_X + 1) D_X` and `s` the Slater slack.
pub fn m_lambda_bound<T: Scalar>(constants: &ProblemConstants<T>, tau_hi: T, tau_lo: T, p: T) -> Result<T> {
    let s = constants.min_slack;
    if !(s > T::zero()) {
        return Err(Error::Slater(format!("minimum slack {s} is not positive")));
    }
    if !(tau_lo > T::zero()) || tau_hi < tau_lo {
        return Err(Error::Input("need 0 < tau_lo <= tau_hi".into()));
    }
    let (bf, bg, d) = (constants.objective_grad_bound, constants.constraint_bound, constants.diameter);
    let c_lambda = (bf + p * d + T::one()) * d;
    let two = T::lit(2.0);
    let second = two * tau_hi * (c_lambda + tau_hi * bg * bg) / (two * tau_lo * s);
    Ok((two * tau_hi * bg).max(second))
}

/// `[lambda_i + tau g_i]_+`
pub fn dual_step<T: Scalar>(lambda: &[T], g_vals: &[T], tau: T) -> Vec<T> {
    lambda.iter().zip(g_vals).map(|(&l, &g)| (l + tau * g).pos()).collect()
}

/// `z + theta (x_new - z)` for `theta in [0, 1]`.
pub fn z_step<T: Scalar>(z: &[T], x_new: &[T], theta: T) -> Result<Vec<T>> {
    check_dim(z.len(), x_new.len())?;
    if !(theta >= T::zero() && theta <= T::one()) {
        return Err(Error::Input(format!("theta must lie in [0, 1], got {theta}")));
    }
    Ok(lerp(z, x_new, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IMELaState<T> {
    pub x: Vec<T>,
    pub z: Vec<T>,
    pub lambda: Vec<T>,
    pub t: usize,
}

impl<T: Scalar> IMELaState<T> {
    /// State stored in an iMELa trace row.
    pub fn from_record(r: &TraceRecord<T>) -> Option<Self> {
        Some(Self { x: r.x.clone(), z: r.z.clone()?, lambda: r.lambda.clone(), t: r.t })
    }
}

pub fn run<T: Scalar>(
    instance: &ProblemInstance<T>,
    params: &IMELaParams<T>,
    counter: &mut OracleCounter,
) -> Result<SolverTrace<T>> {
    let l = instance.smoothness()?;
    params.validate(l)?;
    let m = instance.num_constraints();
    let start = params.x0.as_deref().unwrap_or(&instance.constants.x_feas);
    check_dim(instance.dim(), start.len())?;

    // The multiplier bound is only guaranteed when every inner solve certifies
    // stationarity <= eps_t <= 1, i.e. c <= 1 and the default APG step.
    let lambda_cap = if m > 0 && params.c <= T::one() && params.inner_step.is_none() {
        Some(m_lambda_bound(&instance.constants, params.tau, params.tau, params.p)?)
    } else {
        None
    };

    let clock = Instant::now();
    let base = *counter;
    let mut trace = SolverTrace::new(Method::Imela);
    let mut x = instance.set.project(start);
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
        let g = instance.constraint_values(&x);
        lambda = dual_step(&lambda, &g, params.tau);
        if let Some(cap) = lambda_cap {
            debug_assert!(norm(&lambda) <= cap, "multiplier norm {} exceeds bound {cap}", norm(&lambda));
        }
        let eps_t = params.eps(t);
        let sub = build_prox_lagrangian(instance, &z, &lambda, params.p)?
            .with_start(x.clone())
            .with_step(params.inner_step);
        let res = apg_solve(&sub, eps_t / T::lit(INNER_TOL_DIVISOR), params.max_inner_steps, counter)?;
        if !res.converged {
            trace.inner_failures += 1;
        }
        x = res.x;
        z = z_step(&z, &x, params.theta)?;
        t += 1;
        let rec = make_record(
            instance,
            x.clone(),
            Some(lambda.clone()),
            RowInfo {
                t,
                inner_steps: res.steps,
                cum_oracle: counter.steps - base.steps,
                inner_converged: res.converged,
                eps: Some(eps_t),
                branch: None,
                z: Some(z.clone()),
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            },
        )?;
        let done = matches!((params.eps_target, rec.combined_sq()), (Some(e), Some(c)) if c <= e * e);
        trace.records.push(rec);
        if done {
            trace.stopped_early = true;
            break;
        }
    }
    trace.counter = counter.since(&base);
    Ok(trace)
}

/// Estimate of `phi = L_p(x, z, lambda) - 2 d(lambda, z) + 2 v(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialEstimate<T> {
    pub value: T,
    pub lagrangian: T,
    /// `d(lambda, z) = min_X L_p(., z, lambda)`.
    pub dual: T,
    /// `v(z) = min {f + (p/2)||. - z||^2 : x in X, g(x) <= 0}`.
    pub prox_value: T,
    /// `false` when any inner solve hit its step limit.
    pub reliable: bool,
}

const POTENTIAL_MAX_STEPS: usize = 200_000;

/// Minimizes `L_p(., z, lambda)` to gradient-mapping tolerance `tol`;
/// returns the value, the constraint values at the minimizer and whether APG converged.
fn dual_function<T: Scalar>(
    instance: &ProblemInstance<T>,
    z: &[T],
    lambda: &[T],
    p: T,
    tol: T,
) -> Result<(T, Vec<T>, bool)> {
    let sub = build_prox_lagrangian(instance, z, lambda, p)?;
    let mut scratch = OracleCounter::new();
    let res = apg_solve(&sub, tol, POTENTIAL_MAX_STEPS, &mut scratch)?;
    let val = sub.objective.value(&res.x);
    Ok((val, instance.constraint_values(&res.x), res.converged))
}

/// `v(z)` through strong duality: `v(z) = max_{lambda >= 0} d(lambda, z)`.
/// One constraint: bisection on the sign of `g(x(lambda, z))`. Several:
/// projected gradient ascent on the (smooth, concave) dual function.
fn prox_value<T: Scalar>(instance: &ProblemInstance<T>, z: &[T], p: T, tol: T) -> Result<(T, bool)> {
    let m = instance.num_constraints();
    let (d0, g0, ok0) = dual_function(instance, z, &vec![T::zero(); m], p, tol)?;
    if g0.iter().all(|&g| g <= T::zero()) {
        return Ok((d0, ok0));
    }
    let mut reliable = ok0;
    if m == 1 {
        let mut lo = T::zero();
        let mut hi = T::one();
        loop {
            let (_, g, ok) = dual_function(instance, z, &[hi], p, tol)?;
            reliable &= ok;
            if g[0] <= T::zero() {
                break;
            }
            lo = hi;
            hi = hi * T::lit(2.0);
            if hi > T::lit(1e12) {
                return Err(Error::Slater("dual function has no maximizer below 1e12".into()));
            }
        }
        for _ in 0..200 {
            if hi - lo <= T::epsilon() * T::lit(4.0) * hi.max(T::one()) {
                break;
            }
            let mid = T::lit(0.5) * (lo + hi);
            let (_, g, ok) = dual_function(instance, z, &[mid], p, tol)?;
            reliable &= ok;
            if g[0] > T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (v, _, ok) = dual_function(instance, z, &[T::lit(0.5) * (lo + hi)], p, tol)?;
        return Ok((v, reliable && ok));
    }
    let l = instance.smoothness()?;
    let bg = instance.constants.constraint_bound;
    let step = (p - l) / (T::from_usize_lossy(m) * bg * bg).max(T::min_positive_value());
    let mut lambda = vec![T::zero(); m];
    let mut converged = false;
    for _ in 0..20_000 {
        let (_, g, ok) = dual_function(instance, z, &lambda, p, tol)?;
        reliable &= ok;
        let next = dual_step(&lambda, &g, step);
        let moved = crate::linalg::dist(&next, &lambda) / step;
        lambda = next;
        if moved <= tol {
            converged = true;
            break;
        }
    }
    let (v, _, ok) = dual_function(instance, z, &lambda, p, tol)?;
    Ok((v, reliable && ok && converged))
}

/// Diagnostic estimate of the potential at `state`; inner problems are
/// solved to gradient-mapping tolerance `tol`.
pub fn potential<T: Scalar>(
    instance: &ProblemInstance<T>,
    state: &IMELaState<T>,
    params: &IMELaParams<T>,
    tol: T,
) -> Result<PotentialEstimate<T>> {
    check_dim(instance.dim(), state.x.len())?;
    check_dim(instance.dim(), state.z.len())?;
    check_dim(instance.num_constraints(), state.lambda.len())?;
    let p = params.p;
    let ev = instance.evaluate_uncounted(&state.x)?;
    let diff: Vec<T> = state.x.iter().zip(&state.z).map(|(&a, &b)| a - b).collect();
    let lagrangian = ev.f_val + dot(&state.lambda, &ev.g_vals) + p / T::lit(2.0) * dot(&diff, &diff);
    let (dual, _, ok_d) = dual_function(instance, &state.z, &state.lambda, p, tol)?;
    let (prox_value, ok_v) = prox_value(instance, &state.z, p, tol)?;
    let two = T::lit(2.0);
    Ok(PotentialEstimate {
        value: lagrangian - two * dual + two * prox_value,
        lagrangian,
        dual,
        prox_value,
        reliable: ok_d && ok_v,
    })
}
