//! Simple feasible sets: Euclidean projection, gradient mapping and
//! distance to the normal cone.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm, norm1};
use crate::nnls::{least_distance, nnls};
use crate::problem::SmoothOracle;
use crate::Scalar;

/// Default tolerance for deciding activity (`x_i = 0`, active rows).
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-9;

/// `{x : A x <= b}`, bounded and non-empty. Built through [`FeasibleSet::polytope`].
#[derive(Debug, Clone, Serialize)]
pub struct Polytope<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> Polytope<T> {
    pub fn rows(&self) -> &[Vec<T>] {
        &self.a
    }

    pub fn rhs(&self) -> &[T] {
        &self.b
    }

    fn slack(&self, x: &[T]) -> Vec<T> {
        self.a.iter().zip(&self.b).map(|(row, &bj)| dot(row, x) - bj).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum FeasibleSet<T> {
    Box { lower: Vec<T>, upper: Vec<T> },
    L1Ball { dim: usize, radius: T },
    Polytope(Polytope<T>),
}

impl<T: Scalar> FeasibleSet<T> {
    pub fn new_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Input("box requires lower <= upper componentwise".into()));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn l1_ball(dim: usize, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::Input(format!("l1-ball radius must be positive, got {radius}")));
        }
        Ok(Self::L1Ball { dim, radius })
    }

    /// Builds `{x : A x <= b}`. Boundedness is certified by expressing each
    /// `+-e_i` as a non-negative combination of rows of `A`, which also yields
    /// a bounding box; non-emptiness by a least-distance solve.
    pub fn polytope(a: Vec<Vec<T>>, b: Vec<T>) -> Result<Self> {
        check_dim(a.len(), b.len())?;
        let n = a.first().map(|r| r.len()).ok_or_else(|| Error::Input("empty polytope description".into()))?;
        for row in &a {
            check_dim(n, row.len())?;
        }
        let mut lower = vec![T::zero(); n];
        let mut upper = vec![T::zero(); n];
        let probe_tol = T::lit(1e-9);
        for i in 0..n {
            for sign in [T::one(), -T::one()] {
                let mut e = vec![T::zero(); n];
                e[i] = sign;
                let sol = nnls(&a, &e);
                if sol.residual_norm > probe_tol {
                    return Err(Error::Input(format!("polytope is unbounded along coordinate {i}")));
                }
                let bound: T = sol.coeffs.iter().zip(&b).map(|(&c, &bj)| c * bj).sum();
                if sign > T::zero() {
                    upper[i] = bound;
                } else {
                    lower[i] = -bound;
                }
            }
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Input("polytope is empty".into()));
        }
        let h: Vec<T> = b.iter().map(|&bj| -bj).collect();
        let neg_a: Vec<Vec<T>> = a.iter().map(|r| r.iter().map(|&v| -v).collect()).collect();
        if least_distance(&neg_a, &h).is_none() {
            return Err(Error::Input("polytope is empty".into()));
        }
        Ok(Self::Polytope(Polytope { a, b, lower, upper }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lower, .. } => lower.len(),
            Self::L1Ball { dim, .. } => *dim,
            Self::Polytope(p) => p.lower.len(),
        }
    }

    /// Axis-aligned box containing the set.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match self {
            Self::Box { lower, upper } => (lower.clone(), upper.clone()),
            Self::L1Ball { dim, radius } => (vec![-*radius; *dim], vec![*radius; *dim]),
            Self::Polytope(p) => (p.lower.clone(), p.upper.clone()),
        }
    }

    /// Euclidean diameter (exact for boxes and l1-balls, bounding-box
    /// diagonal for general polytopes).
    pub fn diameter(&self) -> T {
        match self {
            Self::L1Ball { radius, .. } => *radius + *radius,
            _ => {
                let (lo, hi) = self.bounding_box();
                crate::linalg::dist(&lo, &hi)
            }
        }
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&xi, (&l, &u))| xi >= l - tol && xi <= u + tol),
            Self::L1Ball { radius, .. } => norm1(x) <= *radius + tol,
            Self::Polytope(p) => p.slack(x).iter().all(|&s| s <= tol),
        }
    }

    /// Halfspace description `A x <= b`. Boxes list the upper-bound rows
    /// `x_i <= u_i` first (rows `0..n`), then `-x_i <= -l_i` (rows `n..2n`).
    /// The l1-ball has `2^n` rows and is never expanded.
    pub fn halfspaces(&self) -> Option<(Vec<Vec<T>>, Vec<T>)> {
        match self {
            Self::Box { lower, upper } => {
                let n = lower.len();
                let mut a = Vec::with_capacity(2 * n);
                let mut b = Vec::with_capacity(2 * n);
                for (i, &u) in upper.iter().enumerate() {
                    let mut row = vec![T::zero(); n];
                    row[i] = T::one();
                    a.push(row);
                    b.push(u);
                }
                for (i, &l) in lower.iter().enumerate() {
                    let mut row = vec![T::zero(); n];
                    row[i] = -T::one();
                    a.push(row);
                    b.push(-l);
                }
                Some((a, b))
            }
            Self::L1Ball { .. } => None,
            Self::Polytope(p) => Some((p.a.clone(), p.b.clone())),
        }
    }

    /// Euclidean projection of `v` onto the set.
    ///
    /// # Panics
    /// If `v.len()` differs from the set dimension.
    pub fn project(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.dim(), "projection dimension mismatch");
        match self {
            Self::Box { lower, upper } => v
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(&vi, (&l, &u))| vi.max(l).min(u))
                .collect(),
            Self::L1Ball { radius, .. } => project_l1_ball(v, *radius),
            Self::Polytope(p) => project_polytope(p, v),
        }
    }

    /// `dist(v, N_X(x))`. Activity of bounds, rows and zero coordinates is
    /// decided with `active_tol`.
    pub fn normal_cone_distance(&self, x: &[T], v: &[T], active_tol: T) -> Result<T> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), v.len())?;
        if !self.contains(x, active_tol) {
            return Err(Error::Input("normal cone query point lies outside the set".into()));
        }
        Ok(match self {
            Self::Box { lower, upper } => {
                let mut acc = T::zero();
                for i in 0..x.len() {
                    let at_lo = x[i] - lower[i] <= active_tol;
                    let at_hi = upper[i] - x[i] <= active_tol;
                    let d = match (at_lo, at_hi) {
                        (true, true) => T::zero(),
                        (true, false) => v[i].pos(),
                        (false, true) => (-v[i]).pos(),
                        (false, false) => v[i].abs(),
                    };
                    acc += d * d;
                }
                acc.sqrt()
            }
            Self::L1Ball { radius, .. } => l1_normal_cone_distance(x, v, *radius, active_tol),
            Self::Polytope(p) => {
                let active: Vec<Vec<T>> = p
                    .slack(x)
                    .iter()
                    .zip(&p.a)
                    .filter(|(s, _)| s.abs() <= active_tol)
                    .map(|(_, row)| row.clone())
                    .collect();
                nnls(&active, v).residual_norm
            }
        })
    }
}

/// Sort-and-threshold projection onto `{x : ||x||_1 <= r}`.
pub fn project_l1_ball<T: Scalar>(v: &[T], radius: T) -> Vec<T> {
    if norm1(v) <= radius {
        return v.to_vec();
    }
    let mut mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (j, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / T::from_usize_lossy(j + 1);
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&vi| {
            let shrunk = (vi.abs() - theta).pos();
            if vi < T::zero() {
                -shrunk
            } else {
                shrunk
            }
        })
        .collect()
}

fn project_polytope<T: Scalar>(p: &Polytope<T>, v: &[T]) -> Vec<T> {
    let slack = p.slack(v);
    if slack.iter().all(|&s| s <= T::zero()) {
        return v.to_vec();
    }
    // y = v + w with min ||w|| s.t. -A w >= A v - b.
    let neg_a: Vec<Vec<T>> = p.a.iter().map(|r| r.iter().map(|&x| -x).collect()).collect();
    let w = least_distance(&neg_a, &slack).expect("non-emptiness checked at construction");
    v.iter().zip(&w).map(|(&vi, &wi)| vi + wi).collect()
}

/// Normal cone of the l1-ball at a boundary point is `c * d||x||_1` for
/// `c >= 0`: `s_i = c sign(x_i)` on the support and `|s_i| <= c` on zeros.
/// The squared distance is convex piecewise quadratic in `c` with
/// breakpoints at `|v_i|` over the zero set; each piece is minimized in
/// closed form.
fn l1_normal_cone_distance<T: Scalar>(x: &[T], v: &[T], radius: T, tol: T) -> T {
    if norm1(x) < radius - tol {
        return norm(v);
    }
    let mut support_dot = T::zero(); // sum_{S} sign(x_i) v_i
    let mut support_n = 0usize;
    let mut zero_mags: Vec<T> = Vec::new();
    for (&xi, &vi) in x.iter().zip(v) {
        if xi.abs() <= tol {
            zero_mags.push(vi.abs());
        } else {
            support_dot += if xi > T::zero() { vi } else { -vi };
            support_n += 1;
        }
    }
    zero_mags.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));

    // The cone is {c (sign(x_S), w_Z) : c >= 0, |w_i| <= c}; the squared
    // distance sum_S (v_i - c sign x_i)^2 + sum_Z (|v_i| - c)_+^2 is summed
    // directly (the expanded form cancels badly near zero).
    let objective = |c: T| -> T {
        let mut val = T::zero();
        for (&xi, &vi) in x.iter().zip(v) {
            let r = if xi.abs() <= tol {
                (vi.abs() - c).pos()
            } else if xi > T::zero() {
                vi - c
            } else {
                vi + c
            };
            val += r * r;
        }
        val
    };

    // Piece k: the k largest zero-magnitudes exceed c, c in [m_{k+1}, m_k].
    let mut best_c = T::zero();
    let mut best = objective(best_c);
    let mut active_sum = T::zero();
    for k in 0..=zero_mags.len() {
        if k > 0 {
            active_sum += zero_mags[k - 1];
        }
        let lo = zero_mags.get(k).copied().unwrap_or(T::zero());
        let hi = if k == 0 { T::infinity() } else { zero_mags[k - 1] };
        let count = support_n + k;
        if count == 0 {
            continue;
        }
        let c_star = (support_dot + active_sum) / T::from_usize_lossy(count);
        let c = c_star.max(lo).min(hi).max(T::zero());
        if c.is_finite() && c != best_c {
            let val = objective(c);
            if val < best {
                best = val;
                best_c = c;
            }
        }
    }
    best.sqrt()
}

/// Projected-gradient image and gradient-mapping norm at `u`.
#[derive(Debug, Clone)]
pub struct GradientMapping<T> {
    pub mapped: Vec<T>,
    pub norm: T,
    pub gradient: Vec<T>,
}

/// `mapped = P(u - eta grad F(u))`, `norm = ||u - mapped|| / eta`.
pub fn gradient_mapping<T: Scalar>(
    oracle: &dyn SmoothOracle<T>,
    set: &FeasibleSet<T>,
    u: &[T],
    eta: T,
) -> Result<GradientMapping<T>> {
    if !(eta > T::zero()) {
        return Err(Error::Input(format!("step size must be positive, got {eta}")));
    }
    check_dim(set.dim(), u.len())?;
    let (_, gradient) = oracle.eval(u);
    Ok(gradient_mapping_from(set, u, &gradient, eta))
}

pub(crate) fn gradient_mapping_from<T: Scalar>(
    set: &FeasibleSet<T>,
    u: &[T],
    gradient: &[T],
    eta: T,
) -> GradientMapping<T> {
    let step: Vec<T> = u.iter().zip(gradient).map(|(&ui, &gi)| ui - eta * gi).collect();
    let mapped = set.project(&step);
    let norm = crate::linalg::dist(u, &mapped) / eta;
    GradientMapping { mapped, norm, gradient: gradient.to_vec() }
}
