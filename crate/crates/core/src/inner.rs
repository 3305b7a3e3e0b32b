//! Accelerated projected gradient (APG) for strongly convex smooth
//! minimization over a simple set, and the two composite subproblems solved
//! with it: the proximal Lagrangian and the squared-hinge penalty.

use crate::error::{check_dim, Error, Result};
use crate::geometry::{gradient_mapping_from, FeasibleSet};
use crate::linalg::{axpy, dist, dot, norm1};
use crate::problem::{OracleCounter, ProblemInstance, SmoothOracle};
use crate::Scalar;

/// Default cap on APG steps per subproblem.
pub const DEFAULT_MAX_INNER_STEPS: usize = 1_000_000;

/// Gradient units charged per evaluation of a composite oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OracleCost {
    pub objective: u64,
    pub constraints: u64,
}

pub struct InnerProblem<'a, T: Scalar> {
    pub objective: Box<dyn SmoothOracle<T> + 'a>,
    pub set: &'a FeasibleSet<T>,
    /// Strong convexity modulus (0 selects the plain accelerated scheme).
    pub mu: T,
    /// Smoothness constant `K_F` of the composite objective.
    pub smoothness: T,
    pub x0: Vec<T>,
    /// Step-size override; `1 / K_F` when unset.
    pub step: Option<T>,
    pub cost: OracleCost,
}

impl<'a, T: Scalar> InnerProblem<'a, T> {
    pub fn with_start(mut self, x0: Vec<T>) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_step(mut self, step: Option<T>) -> Self {
        self.step = step;
        self
    }

    pub fn step_size(&self) -> T {
        self.step.unwrap_or_else(|| T::one() / self.smoothness)
    }
}

#[derive(Debug, Clone)]
pub struct InnerResult<T> {
    /// Projected-gradient image `T(u)` of the last internal iterate.
    pub x: Vec<T>,
    /// The internal iterate whose gradient mapping certified the stop.
    pub u: Vec<T>,
    pub steps: usize,
    pub final_gm_norm: T,
    /// `false` when the step budget ran out (or the iteration diverged)
    /// before reaching the tolerance.
    pub converged: bool,
}

/// Nesterov's accelerated projected gradient with constant momentum
/// `(1 - sqrt(mu eta)) / (1 + sqrt(mu eta))` (or the `t_k` sequence when
/// `mu = 0`). Each step costs one gradient of the composite objective and
/// certifies the gradient mapping at the extrapolated point; the method
/// stops once `||G_{1/eta}(u_k)|| <= eps_prime` and returns `T_{1/eta}(u_k)`.
pub fn apg_solve<T: Scalar>(
    prob: &InnerProblem<'_, T>,
    eps_prime: T,
    max_steps: usize,
    counter: &mut OracleCounter,
) -> Result<InnerResult<T>> {
    check_dim(prob.set.dim(), prob.x0.len())?;
    if !(eps_prime > T::zero()) {
        return Err(Error::Input(format!("inner tolerance must be positive, got {eps_prime}")));
    }
    if prob.mu < T::zero() || !(prob.smoothness > T::zero()) {
        return Err(Error::Config("inner problem needs mu >= 0 and K_F > 0".into()));
    }
    let eta = prob.step_size();
    if !(eta > T::zero()) {
        return Err(Error::Input(format!("step size must be positive, got {eta}")));
    }
    let strongly_convex = prob.mu > T::zero();
    let q = (prob.mu * eta).sqrt().min(T::one());
    let fixed_momentum = (T::one() - q) / (T::one() + q);

    let mut x_prev = prob.x0.clone();
    let mut u = prob.x0.clone();
    let mut t_k = T::one();
    let mut steps = 0usize;
    loop {
        let (_, grad) = prob.objective.eval(&u);
        counter.objective_grads += prob.cost.objective;
        counter.constraint_grads += prob.cost.constraints;
        counter.projections += 1;
        counter.steps += 1;
        steps += 1;
        let gm = gradient_mapping_from(prob.set, &u, &grad, eta);
        if gm.norm <= eps_prime {
            return Ok(InnerResult { x: gm.mapped, u, steps, final_gm_norm: gm.norm, converged: true });
        }
        if steps >= max_steps || !gm.norm.is_finite() {
            return Ok(InnerResult { x: gm.mapped, u, steps, final_gm_norm: gm.norm, converged: false });
        }
        let x_new = gm.mapped;
        let beta = if strongly_convex {
            fixed_momentum
        } else {
            let t_next = (T::one() + (T::one() + T::lit(4.0) * t_k * t_k).sqrt()) / T::lit(2.0);
            let b = (t_k - T::one()) / t_next;
            t_k = t_next;
            b
        };
        u = x_new.iter().zip(&x_prev).map(|(&xn, &xp)| xn + beta * (xn - xp)).collect();
        x_prev = x_new;
    }
}

/// `F(x) = f(x) + lambda^T g(x) + (p/2)||x - z||^2`.
pub struct ProxLagrangian<'a, T: Scalar> {
    pub instance: &'a ProblemInstance<T>,
    pub center: Vec<T>,
    pub lambda: Vec<T>,
    pub p: T,
}

impl<T: Scalar> SmoothOracle<T> for ProxLagrangian<'_, T> {
    fn dim(&self) -> usize {
        self.instance.dim()
    }

    fn eval(&self, x: &[T]) -> (T, Vec<T>) {
        let (mut val, mut grad) = self.instance.objective.eval(x);
        for (c, &li) in self.instance.constraints.iter().zip(&self.lambda) {
            if li != T::zero() {
                let (gv, gg) = c.eval(x);
                val += li * gv;
                axpy(li, &gg, &mut grad);
            }
        }
        let half_p = self.p / T::lit(2.0);
        for ((gi, &xi), &zi) in grad.iter_mut().zip(x).zip(&self.center) {
            let d = xi - zi;
            val += half_p * d * d;
            *gi += self.p * d;
        }
        (val, grad)
    }
}

/// `F(u) = f(u) + (rho/2) sum_i [g_i(u)]_+^2 + (p/2)||u - center||^2`.
pub struct SquaredHingePenalty<'a, T: Scalar> {
    pub instance: &'a ProblemInstance<T>,
    pub center: Vec<T>,
    pub rho: T,
    pub p: T,
}

impl<T: Scalar> SmoothOracle<T> for SquaredHingePenalty<'_, T> {
    fn dim(&self) -> usize {
        self.instance.dim()
    }

    fn eval(&self, u: &[T]) -> (T, Vec<T>) {
        let (mut val, mut grad) = self.instance.objective.eval(u);
        let half = T::lit(0.5);
        for c in &self.instance.constraints {
            let (gv, gg) = c.eval(u);
            let hinge = gv.pos();
            if hinge > T::zero() {
                val += half * self.rho * hinge * hinge;
                axpy(self.rho * hinge, &gg, &mut grad);
            }
        }
        for ((gi, &ui), &ci) in grad.iter_mut().zip(u).zip(&self.center) {
            let d = ui - ci;
            val += half * self.p * d * d;
            *gi += self.p * d;
        }
        (val, grad)
    }
}

fn require_prox<T: Scalar>(instance: &ProblemInstance<T>, p: T) -> Result<T> {
    let l = instance.smoothness()?;
    if !(p > l) {
        return Err(Error::Config(format!("proximal parameter p = {p} must exceed L = {l}")));
    }
    Ok(l)
}

fn cost_of<T: Scalar>(instance: &ProblemInstance<T>) -> OracleCost {
    OracleCost { objective: 1, constraints: u64::from(instance.num_constraints() > 0) }
}

/// Proximal-Lagrangian subproblem at `(z, lambda)`. Strongly convex with
/// `mu = p - L` and `(L + L ||lambda||_1 + p)`-smooth for the given multiplier.
pub fn build_prox_lagrangian<'a, T: Scalar>(
    instance: &'a ProblemInstance<T>,
    z: &[T],
    lambda: &[T],
    p: T,
) -> Result<InnerProblem<'a, T>> {
    check_dim(instance.dim(), z.len())?;
    check_dim(instance.num_constraints(), lambda.len())?;
    if lambda.iter().any(|&l| !(l >= T::zero())) {
        return Err(Error::Input("multipliers must be non-negative".into()));
    }
    let l = require_prox(instance, p)?;
    Ok(InnerProblem {
        objective: Box::new(ProxLagrangian {
            instance,
            center: z.to_vec(),
            lambda: lambda.to_vec(),
            p,
        }),
        set: &instance.set,
        mu: p - l,
        smoothness: l + l * norm1(lambda) + p,
        x0: z.to_vec(),
        step: None,
        cost: cost_of(instance),
    })
}

/// Squared-hinge penalty subproblem around `center`. The penalty Hessian is
/// bounded by `rho (||Jg||^2 + L sum_i [g_i]_+) <= rho (B_g^2 + sqrt(m) L B_g)`.
pub fn build_penalty<'a, T: Scalar>(
    instance: &'a ProblemInstance<T>,
    center: &[T],
    rho: T,
    p: T,
) -> Result<InnerProblem<'a, T>> {
    check_dim(instance.dim(), center.len())?;
    if !(rho > T::zero()) {
        return Err(Error::Config(format!("penalty parameter must be positive, got {rho}")));
    }
    let l = require_prox(instance, p)?;
    let bg = instance.constants.constraint_bound;
    let sqrt_m = T::from_usize_lossy(instance.num_constraints()).sqrt();
    Ok(InnerProblem {
        objective: Box::new(SquaredHingePenalty { instance, center: center.to_vec(), rho, p }),
        set: &instance.set,
        mu: p - l,
        smoothness: l + rho * (bg * bg + sqrt_m * l * bg) + p,
        x0: center.to_vec(),
        step: None,
        cost: cost_of(instance),
    })
}

/// A-priori smoothness bound `K = L + L sqrt(m) M_lambda + p` of the
/// proximal Lagrangian over all multipliers the outer loop can produce.
pub fn a_priori_smoothness<T: Scalar>(l: T, m: usize, m_lambda: T, p: T) -> T {
    l + l * T::from_usize_lossy(m).sqrt() * m_lambda + p
}

/// `dist(-grad F(x), N_X(x)) <= (1 + K_F eta) ||G_{1/eta}(u)||` for `x = T_{1/eta}(u)`.
pub fn stationarity_factor<T: Scalar>(smoothness: T, eta: T) -> T {
    T::one() + smoothness * eta
}

/// Function value of the composite objective (uncounted; diagnostics only).
pub fn objective_value<T: Scalar>(prob: &InnerProblem<'_, T>, x: &[T]) -> T {
    prob.objective.value(x)
}

/// Optimality certificate for tests: `<grad F(x), y - x> >= -tol` style
/// check is left to callers; this returns `||x - y||`.
#[doc(hidden)]
pub fn iterate_gap<T: Scalar>(x: &[T], y: &[T]) -> T {
    dist(x, y)
}

#[doc(hidden)]
pub fn inner_product<T: Scalar>(a: &[T], b: &[T]) -> T {
    dot(a, b)
}
