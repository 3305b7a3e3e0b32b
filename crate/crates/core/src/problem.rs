//! Problem abstraction: a smooth objective, convex smooth inequality
//! constraints `g(x) <= 0`, a simple polyhedral feasible set and the known
//! problem constants, plus oracle-call accounting.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::geometry::FeasibleSet;
use crate::linalg::norm;
use crate::Scalar;

/// Deterministic first-order oracle for a smooth function on `R^n`.
pub trait SmoothOracle<T: Scalar> {
    fn dim(&self) -> usize;

    /// Value and gradient at `x`.
    fn eval(&self, x: &[T]) -> (T, Vec<T>);

    fn value(&self, x: &[T]) -> T {
        self.eval(x).0
    }
}

pub type SharedOracle<T> = Arc<dyn SmoothOracle<T> + Send + Sync>;

/// Oracle backed by a closure returning `(value, gradient)`.
pub struct FnOracle<F> {
    dim: usize,
    eval: F,
}

impl<F> FnOracle<F> {
    pub fn new(dim: usize, eval: F) -> Self {
        Self { dim, eval }
    }
}

impl<T, F> SmoothOracle<T> for FnOracle<F>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[T]) -> (T, Vec<T>) {
        (self.eval)(x)
    }
}

/// Wraps a closure into a shareable oracle.
pub fn oracle<T, F>(dim: usize, eval: F) -> SharedOracle<T>
where
    T: Scalar,
    F: Fn(&[T]) -> (T, Vec<T>) + Send + Sync + 'static,
{
    Arc::new(FnOracle::new(dim, eval))
}

/// Constants the methods rely on. `smoothness` is the common smoothness
/// constant `L` of `f` and every `g_i`; it is never estimated by a solver.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemConstants<T> {
    pub smoothness: Option<T>,
    /// Bound on `||grad f||` over the set.
    pub objective_grad_bound: T,
    /// Bound on `max(||g||, ||Jg||)` over the set.
    pub constraint_bound: T,
    /// Euclidean diameter of the set.
    pub diameter: T,
    /// Strictly feasible point (Slater point).
    pub x_feas: Vec<T>,
    /// `min_i -g_i(x_feas)`; filled in by [`ProblemInstance::new`]. Infinite when `m = 0`.
    pub min_slack: T,
    /// Optional lower bound on `f` over the set; only used for reporting.
    pub objective_lower_bound: Option<T>,
}

impl<T: Scalar> ProblemConstants<T> {
    pub fn new(
        smoothness: T,
        objective_grad_bound: T,
        constraint_bound: T,
        diameter: T,
        x_feas: Vec<T>,
    ) -> Self {
        Self {
            smoothness: Some(smoothness),
            objective_grad_bound,
            constraint_bound,
            diameter,
            x_feas,
            min_slack: T::infinity(),
            objective_lower_bound: None,
        }
    }

    pub fn with_lower_bound(mut self, f_lower: T) -> Self {
        self.objective_lower_bound = Some(f_lower);
        self
    }

    /// `L`, or a configuration error when it was never supplied.
    pub fn smoothness(&self) -> Result<T> {
        self.smoothness
            .ok_or_else(|| Error::Config("smoothness constant L is required".into()))
    }
}

/// Gradient-oracle accounting for one solver run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OracleCounter {
    pub objective_grads: u64,
    /// One unit per full constraint-vector (Jacobian) evaluation.
    pub constraint_grads: u64,
    pub projections: u64,
    /// Gradient steps taken by the method (the complexity axis of traces).
    pub steps: u64,
}

impl OracleCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts accumulated since the snapshot `base`.
    pub fn since(&self, base: &OracleCounter) -> OracleCounter {
        OracleCounter {
            objective_grads: self.objective_grads - base.objective_grads,
            constraint_grads: self.constraint_grads - base.constraint_grads,
            projections: self.projections - base.projections,
            steps: self.steps - base.steps,
        }
    }
}

/// All oracle outputs at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<T> {
    pub f_val: T,
    pub f_grad: Vec<T>,
    pub g_vals: Vec<T>,
    pub g_jac: Vec<Vec<T>>,
}

#[derive(Clone)]
pub struct ProblemInstance<T: Scalar> {
    pub objective: SharedOracle<T>,
    pub constraints: Vec<SharedOracle<T>>,
    pub set: FeasibleSet<T>,
    pub constants: ProblemConstants<T>,
}

impl<T: Scalar> fmt::Debug for ProblemInstance<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("n", &self.dim())
            .field("m", &self.num_constraints())
            .field("set", &self.set)
            .field("constants", &self.constants)
            .finish()
    }
}

impl<T: Scalar> ProblemInstance<T> {
    /// Validates dimensions and the Slater point, and fills in `min_slack`.
    pub fn new(
        objective: SharedOracle<T>,
        constraints: Vec<SharedOracle<T>>,
        set: FeasibleSet<T>,
        mut constants: ProblemConstants<T>,
    ) -> Result<Self> {
        let n = objective.dim();
        check_dim(n, set.dim())?;
        for c in &constraints {
            check_dim(n, c.dim())?;
        }
        check_dim(n, constants.x_feas.len())?;
        if !set.contains(&constants.x_feas, T::lit(1e-9)) {
            return Err(Error::Slater("x_feas is not a member of the feasible set".into()));
        }
        let mut min_slack = T::infinity();
        for (i, c) in constraints.iter().enumerate() {
            let gi = c.value(&constants.x_feas);
            if gi >= T::zero() || gi.is_nan() {
                return Err(Error::Slater(format!("g_{}(x_feas) = {gi} is not negative", i + 1)));
            }
            min_slack = min_slack.min(-gi);
        }
        constants.min_slack = min_slack;
        Ok(Self { objective, constraints, set, constants })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn smoothness(&self) -> Result<T> {
        self.constants.smoothness()
    }

    /// Evaluates every oracle at `x`, charging one objective-gradient unit and
    /// (when `m > 0`) one constraint-gradient unit.
    pub fn evaluate(&self, x: &[T], counter: &mut OracleCounter) -> Result<Evaluation<T>> {
        let ev = self.evaluate_uncounted(x)?;
        counter.objective_grads += 1;
        if !self.constraints.is_empty() {
            counter.constraint_grads += 1;
        }
        Ok(ev)
    }

    /// Same as [`evaluate`](Self::evaluate) without touching a counter; used by
    /// diagnostics and residual reporting.
    pub fn evaluate_uncounted(&self, x: &[T]) -> Result<Evaluation<T>> {
        check_dim(self.dim(), x.len())?;
        let (f_val, f_grad) = self.objective.eval(x);
        let mut g_vals = Vec::with_capacity(self.constraints.len());
        let mut g_jac = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let (v, g) = c.eval(x);
            g_vals.push(v);
            g_jac.push(g);
        }
        Ok(Evaluation { f_val, f_grad, g_vals, g_jac })
    }

    /// Constraint values only (no gradient work is charged).
    pub fn constraint_values(&self, x: &[T]) -> Vec<T> {
        self.constraints.iter().map(|c| c.value(x)).collect()
    }

    pub fn objective_value(&self, x: &[T]) -> T {
        self.objective.value(x)
    }
}

/// Midpoint convexity violation `max(0, g((x+y)/2) - (g(x)+g(y))/2)`.
pub fn convexity_probe<T: Scalar>(oracle: &dyn SmoothOracle<T>, x: &[T], y: &[T]) -> T {
    let half = T::lit(0.5);
    let mid: Vec<T> = x.iter().zip(y).map(|(&a, &b)| half * (a + b)).collect();
    (oracle.value(&mid) - half * (oracle.value(x) + oracle.value(y))).pos()
}

/// Central finite-difference relative gradient error of `oracle` at `x`:
/// `||g_fd - g|| / max(1, ||g||)`.
pub fn gradient_check<T: Scalar>(oracle: &dyn SmoothOracle<T>, x: &[T], h: T) -> T {
    let (_, g) = oracle.eval(x);
    let mut xp = x.to_vec();
    let mut err = T::zero();
    for i in 0..x.len() {
        let xi = xp[i];
        xp[i] = xi + h;
        let fp = oracle.value(&xp);
        xp[i] = xi - h;
        let fm = oracle.value(&xp);
        xp[i] = xi;
        let fd = (fp - fm) / (h + h);
        err += (fd - g[i]) * (fd - g[i]);
    }
    err.sqrt() / norm(&g).max(T::one())
}
