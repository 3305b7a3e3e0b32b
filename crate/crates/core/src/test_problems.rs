//! Built-in desk-scale instances with analytically known KKT points, and a
//! brute-force grid oracle used to cross-check solver output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{FeasibleSet, DEFAULT_ACTIVE_TOL};
use crate::imela::{default_params, m_lambda_bound};
use crate::kkt::kkt_residuals;
use crate::linalg::{dist, jac_t_mul, norm, norm1, pos_norm};
use crate::problem::{oracle, ProblemConstants, ProblemInstance};
use crate::Scalar;

#[derive(Debug, Clone)]
pub struct AnalyticInstance<T: Scalar> {
    pub instance: ProblemInstance<T>,
    /// Certified `(x*, lambda*)` pairs.
    pub kkt_points: Vec<(Vec<T>, Vec<T>)>,
    pub notes: &'static str,
}

impl<T: Scalar> AnalyticInstance<T> {
    fn certified(instance: ProblemInstance<T>, kkt_points: Vec<(Vec<T>, Vec<T>)>, notes: &'static str) -> Self {
        let out = Self { instance, kkt_points, notes };
        out.verify().expect("built-in KKT certificate");
        out
    }

    /// Re-checks every certificate through [`kkt_residuals`] (all residuals `<= 1e-10`,
    /// relaxed to `1e-5` for `f32`).
    pub fn verify(&self) -> Result<()> {
        let tol = if std::mem::size_of::<T>() == 4 { T::lit(1e-5) } else { T::lit(1e-10) };
        for (x, l) in &self.kkt_points {
            let r = kkt_residuals(&self.instance, x, l)?;
            if !(r.max() <= tol) {
                return Err(Error::Input(format!("certificate at {x:?} fails with residuals {r:?}")));
            }
        }
        Ok(())
    }
}

fn v2<T: Scalar>(a: f64, b: f64) -> Vec<T> {
    vec![T::lit(a), T::lit(b)]
}

fn square_box<T: Scalar>(lo: f64, hi: f64) -> FeasibleSet<T> {
    FeasibleSet::new_box(v2(lo, lo), v2(hi, hi)).expect("valid box")
}

/// `f(x) = (x1 + 1)^2 + x2^2`, `g(x) = -x1`, `X = [0,1] x [-1,1]`.
///
/// The origin is the unique KKT point; LICQ fails there (the constraint and
/// the bound `x1 >= 0` are parallel) but the local error bound holds. Any
/// `lambda in [0, 2]` certifies it.
pub fn counterexample() -> AnalyticInstance<f64> {
    counterexample_in()
}

/// [`counterexample`] in an arbitrary scalar type.
pub fn counterexample_in<T: Scalar>() -> AnalyticInstance<T> {
    let set = FeasibleSet::new_box(v2(0.0, -1.0), v2(1.0, 1.0)).expect("valid box");
    counterexample_on(set, v2(1.0, 0.0), T::lit(5.0).sqrt(), "appendix counterexample on [0,1]x[-1,1]")
}

/// The counterexample objective and constraint on `[-1,1]^2`, where the
/// constraint can be violated (used to exercise penalty terms).
pub fn penalty_box_variant() -> ProblemInstance<f64> {
    counterexample_on(square_box(-1.0, 1.0), v2(0.5, 0.0), 8f64.sqrt(), "counterexample on [-1,1]^2").instance
}

fn counterexample_on<T: Scalar>(
    set: FeasibleSet<T>,
    x_feas: Vec<T>,
    diameter: T,
    notes: &'static str,
) -> AnalyticInstance<T> {
    let two = T::lit(2.0);
    let f = oracle(2, move |x: &[T]| {
        let a = x[0] + T::one();
        (a * a + x[1] * x[1], vec![two * a, two * x[1]])
    });
    let g = oracle(2, |x: &[T]| (-x[0], vec![-T::one(), T::zero()]));
    let (lo, hi) = set.bounding_box();
    let bf = ((two * (hi[0] + T::one())).powi(2) + (two * hi[1].max(-lo[1])).powi(2)).sqrt();
    let bg = T::one().max(hi[0].abs()).max(lo[0].abs());
    let constants = ProblemConstants::new(two, bf, bg, diameter, x_feas).with_lower_bound(T::zero());
    let instance = ProblemInstance::new(f, vec![g], set, constants).expect("valid instance");
    let origin = v2::<T>(0.0, 0.0);
    let kkt_points = if lo[0] == T::zero() {
        [0.0, 1.0, 2.0].iter().map(|&l| (origin.clone(), vec![T::lit(l)])).collect()
    } else {
        vec![(origin, vec![two])]
    };
    AnalyticInstance::certified(instance, kkt_points, notes)
}

fn shifted_sq<T: Scalar>(c: [f64; 2]) -> crate::problem::SharedOracle<T> {
    let c = [T::lit(c[0]), T::lit(c[1])];
    oracle(2, move |x: &[T]| {
        let d = [x[0] - c[0], x[1] - c[1]];
        (d[0] * d[0] + d[1] * d[1], vec![T::lit(2.0) * d[0], T::lit(2.0) * d[1]])
    })
}

fn unit_disk<T: Scalar>() -> crate::problem::SharedOracle<T> {
    oracle(2, |x: &[T]| {
        (x[0] * x[0] + x[1] * x[1] - T::one(), vec![T::lit(2.0) * x[0], T::lit(2.0) * x[1]])
    })
}

/// `f = ||x - (0.3, 0.2)||^2`, `g = ||x||^2 - 1`, `X = [-2,2]^2`. The
/// unconstrained minimizer is strictly feasible, so `lambda* = 0`.
pub fn interior_optimum() -> AnalyticInstance<f64> {
    let constants = ProblemConstants::new(2.0, 2.0 * (2.3f64.hypot(2.2)), 7.0, 32f64.sqrt(), vec![0.0, 0.0])
        .with_lower_bound(0.0);
    let instance =
        ProblemInstance::new(shifted_sq([0.3, 0.2]), vec![unit_disk()], square_box(-2.0, 2.0), constants)
            .expect("valid instance");
    AnalyticInstance::certified(instance, vec![(vec![0.3, 0.2], vec![0.0])], "interior optimum of a disk-constrained quadratic")
}

/// `f = ||x - (1,1)||^2`, `g = x1 + x2 - 1`, `X = [-2,2]^2`: `x* = (0.5, 0.5)`, `lambda* = 1`.
pub fn halfplane() -> AnalyticInstance<f64> {
    let g = oracle(2, |x: &[f64]| (x[0] + x[1] - 1.0, vec![1.0, 1.0]));
    let constants = ProblemConstants::new(2.0, 6.0 * 2f64.sqrt(), 5.0, 32f64.sqrt(), vec![0.0, 0.0])
        .with_lower_bound(0.0);
    let instance = ProblemInstance::new(shifted_sq([1.0, 1.0]), vec![g], square_box(-2.0, 2.0), constants)
        .expect("valid instance");
    AnalyticInstance::certified(instance, vec![(vec![0.5, 0.5], vec![1.0])], "projection onto a halfplane")
}

/// `f = (x1-2)^2 + (x2-1)^2`, `g = ||x||^2 - 1`, `X = [-2,2]^2`:
/// `x* = (2,1)/sqrt(5)`, `lambda* = sqrt(5) - 1`.
pub fn disk() -> AnalyticInstance<f64> {
    let s5 = 5f64.sqrt();
    let constants =
        ProblemConstants::new(2.0, 10.0, 7.0, 32f64.sqrt(), vec![0.0, 0.0]).with_lower_bound(0.0);
    let instance = ProblemInstance::new(shifted_sq([2.0, 1.0]), vec![unit_disk()], square_box(-2.0, 2.0), constants)
        .expect("valid instance");
    AnalyticInstance::certified(instance, vec![(vec![2.0 / s5, 1.0 / s5], vec![s5 - 1.0])], "projection onto the unit disk")
}

/// Unconstrained (`m = 0`) non-convex instance `f = (x1 - 0.5)^2 - (x2 - 0.2)^2 / 2`
/// on `[0,1]^2`. KKT points: `(0.5, 0)`, `(0.5, 0.2)` and `(0.5, 1)`.
pub fn box_only() -> AnalyticInstance<f64> {
    let f = oracle(2, |x: &[f64]| {
        let (a, b) = (x[0] - 0.5, x[1] - 0.2);
        (a * a - 0.5 * b * b, vec![2.0 * a, -b])
    });
    let constants = ProblemConstants::new(2.0, 2f64.hypot(0.8), 0.0, 2f64.sqrt(), vec![0.5, 0.5])
        .with_lower_bound(-0.32);
    let instance = ProblemInstance::new(f, vec![], square_box(0.0, 1.0), constants).expect("valid instance");
    let pts = [0.0, 0.2, 1.0].iter().map(|&y| (vec![0.5, y], vec![])).collect();
    AnalyticInstance::certified(instance, pts, "indefinite quadratic over the unit square, no functional constraints")
}

/// Random non-convex quadratic `f = x^T Q x / 2 + c^T x` with one convex
/// ball constraint `||x - a||^2 <= 0.64` over `[-1,1]^n ∩ {sum x <= 0.5}`.
pub fn random_polytope_problem(seed: u64, n: usize) -> Result<ProblemInstance<f64>> {
    if n == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.gen_range(-1.0..1.0);
            q[i][j] = v;
            q[j][i] = v;
        }
    }
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..0.0)).collect();
    let q_frob = q.iter().map(|r| norm(r).powi(2)).sum::<f64>().sqrt();

    let mut rows = Vec::with_capacity(2 * n + 1);
    let mut rhs = Vec::with_capacity(2 * n + 1);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut r = vec![0.0; n];
            r[i] = s;
            rows.push(r);
            rhs.push(1.0);
        }
    }
    rows.push(vec![1.0; n]);
    rhs.push(0.5);
    let set = FeasibleSet::polytope(rows, rhs)?;

    let (qf, cf) = (q.clone(), c.clone());
    let f = oracle(n, move |x: &[f64]| {
        let qx: Vec<f64> = qf.iter().map(|r| crate::linalg::dot(r, x)).collect();
        let val = 0.5 * crate::linalg::dot(&qx, x) + crate::linalg::dot(&cf, x);
        (val, qx.iter().zip(&cf).map(|(a, b)| a + b).collect())
    });
    let ac = a.clone();
    let g = oracle(n, move |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&ac).map(|(xi, ai)| xi - ai).collect();
        (crate::linalg::dot(&d, &d) - 0.64, d.iter().map(|v| 2.0 * v).collect())
    });
    let reach = (n as f64).sqrt() + norm(&a);
    let constants = ProblemConstants::new(
        q_frob.max(2.0),
        q_frob * (n as f64).sqrt() + norm(&c),
        (reach * reach).max(2.0 * reach),
        set.diameter(),
        a,
    );
    ProblemInstance::new(f, vec![g], set, constants)
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = ["counterexample", "interior", "halfplane", "disk", "box", "penalty-box"];

pub fn builtin(name: &str) -> Result<AnalyticInstance<f64>> {
    Ok(match name {
        "counterexample" => counterexample(),
        "interior" => interior_optimum(),
        "halfplane" => halfplane(),
        "disk" => disk(),
        "box" => box_only(),
        "penalty-box" => AnalyticInstance {
            instance: penalty_box_variant(),
            kkt_points: vec![(vec![0.0, 0.0], vec![2.0])],
            notes: "counterexample on [-1,1]^2",
        },
        other => {
            return Err(Error::Config(format!(
                "unknown built-in problem '{other}' (expected one of {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    })
}

/// A grid point that locally minimizes the KKT score.
#[derive(Debug, Clone)]
pub struct KktCandidate {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// `stat + infeas + cs` at the best multiplier found.
    pub score: f64,
}

const LAMBDA_RES: f64 = 1e-3;

/// Scans the bounding box of the set at resolution `grid_res` (dimension at
/// most 3), minimizes `stat + infeas + cs` over the multipliers at every grid
/// point of the set, and returns one representative per cluster of grid-local
/// minima whose score is within the discretization error of zero.
pub fn brute_force_kkt(instance: &ProblemInstance<f64>, grid_res: f64) -> Result<Vec<KktCandidate>> {
    let n = instance.dim();
    if n > 3 {
        return Err(Error::Input(format!("brute-force KKT search supports n <= 3, got {n}")));
    }
    if !(grid_res > 0.0) {
        return Err(Error::Input("grid resolution must be positive".into()));
    }
    let m = instance.num_constraints();
    let l = instance.smoothness()?;
    let bg = instance.constants.constraint_bound;
    let lambda_hi = if m == 0 {
        0.0
    } else {
        let p = 2.0 * l;
        let tau = default_params(&instance.constants, p, m)?.tau;
        2.0 * m_lambda_bound(&instance.constants, tau, tau, p)?
    };

    let (lo, hi) = instance.set.bounding_box();
    let counts: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| (((b - a) / grid_res).round() as usize).max(1)).collect();
    let total: usize = counts.iter().map(|c| c + 1).product();
    let coord = |idx: &[usize]| -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(i, &k)| lo[i] + (hi[i] - lo[i]) * k as f64 / counts[i] as f64)
            .collect()
    };
    let unflatten = |mut flat: usize| -> Vec<usize> {
        let mut idx = vec![0; n];
        for i in 0..n {
            idx[i] = flat % (counts[i] + 1);
            flat /= counts[i] + 1;
        }
        idx
    };
    let flatten = |idx: &[usize]| -> usize {
        let mut flat = 0;
        for i in (0..n).rev() {
            flat = flat * (counts[i] + 1) + idx[i];
        }
        flat
    };

    let mut scores: Vec<Option<(f64, Vec<f64>)>> = vec![None; total];
    for (flat, slot) in scores.iter_mut().enumerate() {
        let x = coord(&unflatten(flat));
        if !instance.set.contains(&x, DEFAULT_ACTIVE_TOL) {
            continue;
        }
        *slot = Some(best_multiplier(instance, &x, lambda_hi)?);
    }

    let mut minima = Vec::new();
    for flat in 0..total {
        let Some((s, lam)) = &scores[flat] else { continue };
        let idx = unflatten(flat);
        let mut is_min = true;
        for off in 0..3usize.pow(n as u32) {
            let mut nb = idx.clone();
            let mut o = off;
            let mut valid = true;
            let mut moved = false;
            for i in 0..n {
                let d = (o % 3) as isize - 1;
                o /= 3;
                let v = nb[i] as isize + d;
                if v < 0 || v > counts[i] as isize {
                    valid = false;
                }
                nb[i] = v.max(0) as usize;
                moved |= d != 0;
            }
            if !valid || !moved {
                continue;
            }
            if let Some((sn, _)) = &scores[flatten(&nb)] {
                if sn < s {
                    is_min = false;
                    break;
                }
            }
        }
        let lam1 = norm1(lam);
        let threshold = (n as f64).sqrt() * grid_res * (l * (1.0 + lam1) + bg * (1.0 + lam1));
        if is_min && *s <= threshold {
            minima.push(KktCandidate { x: coord(&idx), lambda: lam.clone(), score: *s });
        }
    }

    // Merge minima closer than two grid cells; keep the best of each cluster.
    minima.sort_by(|a, b| a.score.total_cmp(&b.score));
    let link = 2.0 * grid_res * (n as f64).sqrt() + 1e-12;
    let mut reps: Vec<KktCandidate> = Vec::new();
    let mut members: Vec<Vec<Vec<f64>>> = Vec::new();
    for cand in minima {
        let hit = members
            .iter()
            .position(|pts| pts.iter().any(|p| dist(p, &cand.x) <= link));
        match hit {
            Some(k) => members[k].push(cand.x),
            None => {
                members.push(vec![cand.x.clone()]);
                reps.push(cand);
            }
        }
    }
    // A later member may bridge two clusters; merge transitively.
    let mut merged = true;
    while merged {
        merged = false;
        'outer: for i in 0..members.len() {
            for j in (i + 1)..members.len() {
                if members[i].iter().any(|p| members[j].iter().any(|q| dist(p, q) <= link)) {
                    let moved = members.remove(j);
                    members[i].extend(moved);
                    let r = reps.remove(j);
                    if r.score < reps[i].score {
                        reps[i] = r;
                    }
                    merged = true;
                    break 'outer;
                }
            }
        }
    }
    Ok(reps)
}

/// Minimizes the (convex in `lambda`) score `stat + infeas + cs` over
/// `[0, hi]^m` by cyclic ternary search to resolution 1e-3.
fn best_multiplier(instance: &ProblemInstance<f64>, x: &[f64], hi: f64) -> Result<(f64, Vec<f64>)> {
    let ev = instance.evaluate_uncounted(x)?;
    let infeas = pos_norm(&ev.g_vals);
    let score = |lam: &[f64]| -> f64 {
        let mut dir = jac_t_mul(&ev.g_jac, lam, x.len());
        for (d, &gf) in dir.iter_mut().zip(&ev.f_grad) {
            *d = -(*d + gf);
        }
        let stat = instance
            .set
            .normal_cone_distance(x, &dir, DEFAULT_ACTIVE_TOL)
            .unwrap_or(f64::INFINITY);
        let cs: f64 = lam.iter().zip(&ev.g_vals).map(|(l, g)| (l * g).abs()).sum();
        stat + infeas + cs
    };
    let m = ev.g_vals.len();
    let mut lam = vec![0.0; m];
    let sweeps = if m <= 1 { 1 } else { 6 };
    for _ in 0..sweeps {
        for i in 0..m {
            let (mut a, mut b) = (0.0, hi);
            while b - a > LAMBDA_RES {
                let m1 = a + (b - a) / 3.0;
                let m2 = b - (b - a) / 3.0;
                lam[i] = m1;
                let s1 = score(&lam);
                lam[i] = m2;
                let s2 = score(&lam);
                if s1 <= s2 {
                    b = m2;
                } else {
                    a = m1;
                }
            }
            lam[i] = 0.5 * (a + b);
            let mid = score(&lam);
            let lo_val = {
                lam[i] = a;
                score(&lam)
            };
            if lo_val <= mid {
                lam[i] = a;
            } else {
                lam[i] = 0.5 * (a + b);
            }
        }
    }
    Ok((score(&lam), lam))
}
