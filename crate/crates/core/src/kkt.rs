//! Approximate KKT certification, active sets and best-iterate selection.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{FeasibleSet, DEFAULT_ACTIVE_TOL};
use crate::linalg::{dot, jac_t_mul, pos_norm};
use crate::problem::{Evaluation, ProblemInstance};
use crate::trace::SolverTrace;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KKTResiduals<T> {
    /// `dist(-grad f - J^T lambda, N_X(x))`
    pub stationarity: T,
    /// `||[g(x)]_+||`
    pub infeasibility: T,
    /// `sum_i |lambda_i g_i(x)|`
    pub comp_slack: T,
    pub combined_sq: T,
}

impl<T: Scalar> KKTResiduals<T> {
    pub fn new(stationarity: T, infeasibility: T, comp_slack: T) -> Self {
        let combined_sq =
            stationarity * stationarity + infeasibility * infeasibility + comp_slack * comp_slack;
        Self { stationarity, infeasibility, comp_slack, combined_sq }
    }

    pub fn sum(&self) -> T {
        self.stationarity + self.infeasibility + self.comp_slack
    }

    /// Largest of the three residuals; `x` is an `eps`-KKT point when this is `<= eps`.
    pub fn max(&self) -> T {
        self.stationarity.max(self.infeasibility).max(self.comp_slack)
    }
}

pub fn kkt_residuals<T: Scalar>(
    instance: &ProblemInstance<T>,
    x: &[T],
    lambda: &[T],
) -> Result<KKTResiduals<T>> {
    kkt_residuals_with_tol(instance, x, lambda, T::lit(DEFAULT_ACTIVE_TOL))
}

pub fn kkt_residuals_with_tol<T: Scalar>(
    instance: &ProblemInstance<T>,
    x: &[T],
    lambda: &[T],
    active_tol: T,
) -> Result<KKTResiduals<T>> {
    check_dim(instance.num_constraints(), lambda.len())?;
    if lambda.iter().any(|&l| !(l >= T::zero())) {
        return Err(Error::Input("multipliers must be non-negative".into()));
    }
    let ev = instance.evaluate_uncounted(x)?;
    residuals_from_evaluation(instance, x, lambda, &ev, active_tol)
}

/// Residuals from an evaluation already made at `x`.
pub fn residuals_from_evaluation<T: Scalar>(
    instance: &ProblemInstance<T>,
    x: &[T],
    lambda: &[T],
    ev: &Evaluation<T>,
    active_tol: T,
) -> Result<KKTResiduals<T>> {
    check_dim(instance.num_constraints(), lambda.len())?;
    let mut dir = jac_t_mul(&ev.g_jac, lambda, x.len());
    for (d, &gf) in dir.iter_mut().zip(&ev.f_grad) {
        *d = -(*d + gf);
    }
    let stationarity = instance.set.normal_cone_distance(x, &dir, active_tol)?;
    let infeasibility = pos_norm(&ev.g_vals);
    let comp_slack = lambda.iter().zip(&ev.g_vals).map(|(&l, &g)| (l * g).abs()).sum();
    Ok(KKTResiduals::new(stationarity, infeasibility, comp_slack))
}

/// Activity pattern of the feasible set at a point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SetActivity {
    /// Indices of active rows of the halfspace description (see
    /// [`FeasibleSet::halfspaces`] for the row order of boxes).
    Rows(Vec<usize>),
    /// l1-ball: on the boundary or not, signs on the support and the zero set.
    L1 { on_boundary: bool, support: Vec<(usize, i8)>, zeros: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActiveSets {
    /// Constraints with `|g_i(x)| <= tol`.
    pub constraints: Vec<usize>,
    pub set: SetActivity,
}

pub fn active_sets<T: Scalar>(instance: &ProblemInstance<T>, x: &[T], tol: T) -> ActiveSets {
    let constraints = instance
        .constraint_values(x)
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() <= tol)
        .map(|(i, _)| i)
        .collect();
    let set = match &instance.set {
        FeasibleSet::L1Ball { radius, .. } => {
            let l1: T = x.iter().map(|v| v.abs()).sum();
            let mut support = Vec::new();
            let mut zeros = Vec::new();
            for (i, &xi) in x.iter().enumerate() {
                if xi.abs() <= tol {
                    zeros.push(i);
                } else {
                    support.push((i, if xi > T::zero() { 1 } else { -1 }));
                }
            }
            SetActivity::L1 { on_boundary: (*radius - l1).abs() <= tol, support, zeros }
        }
        other => {
            let (a, b) = other.halfspaces().expect("polyhedral set");
            SetActivity::Rows(
                a.iter()
                    .zip(&b)
                    .enumerate()
                    .filter(|(_, (row, &bj))| (dot(row, x) - bj).abs() <= tol)
                    .map(|(j, _)| j)
                    .collect(),
            )
        }
    };
    ActiveSets { constraints, set }
}

/// Error-bound residual `sum_{I_g} g_i^2 + sum_{not I_g} [g_i]_+^2 +
/// sum_{I_A} (a_j x - b_j)^2 + sum_{not I_A} [a_j x - b_j]_+^2`.
/// Row indices refer to [`FeasibleSet::halfspaces`]; l1-balls are not supported.
pub fn subset_residual<T: Scalar>(
    instance: &ProblemInstance<T>,
    x: &[T],
    i_g: &[usize],
    i_a: &[usize],
) -> Result<T> {
    check_dim(instance.dim(), x.len())?;
    let (a, b) = instance
        .set
        .halfspaces()
        .ok_or_else(|| Error::Input("subset residual needs an explicit halfspace description".into()))?;
    if let Some(&bad) = i_g.iter().find(|&&i| i >= instance.num_constraints()) {
        return Err(Error::Input(format!("constraint index {bad} out of range")));
    }
    if let Some(&bad) = i_a.iter().find(|&&j| j >= a.len()) {
        return Err(Error::Input(format!("row index {bad} out of range")));
    }
    let mut acc = T::zero();
    for (i, g) in instance.constraint_values(x).into_iter().enumerate() {
        let term = if i_g.contains(&i) { g } else { g.pos() };
        acc += term * term;
    }
    for (j, (row, &bj)) in a.iter().zip(&b).enumerate() {
        let s = dot(row, x) - bj;
        let term = if i_a.contains(&j) { s } else { s.pos() };
        acc += term * term;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    /// Smallest `stat + infeas + cs`.
    PrimalDual,
    /// Smallest objective among rows with infeasibility at most `feas_slack`.
    Feasible { feas_slack: f64 },
}

impl Selection {
    pub const DEFAULT_FEAS_SLACK: f64 = 1e-5;

    pub fn feasible() -> Self {
        Selection::Feasible { feas_slack: Self::DEFAULT_FEAS_SLACK }
    }
}

/// Index into `trace.records` of the best iterate. Non-finite scores never win.
pub fn best_iterate<T: Scalar>(trace: &SolverTrace<T>, mode: Selection) -> Result<usize> {
    if trace.records.is_empty() {
        return Err(Error::Input("empty trace".into()));
    }
    let scores: Vec<Option<T>> = match mode {
        Selection::PrimalDual => trace.records.iter().map(|r| r.residual_sum()).collect(),
        Selection::Feasible { feas_slack } => {
            let slack = T::lit(feas_slack);
            trace
                .records
                .iter()
                .map(|r| (r.infeasibility <= slack).then_some(r.objective))
                .collect()
        }
    };
    let mut best: Option<(usize, T)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if let Some(s) = s.filter(|s| s.is_finite()) {
            if best.map_or(true, |(_, b)| s < b) {
                best = Some((i, s));
            }
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Input("no qualifying iterate in trace".into()))
}
