//! Lawson–Hanson active-set non-negative least squares and the least-distance
//! program built on it.

use crate::linalg::{dot, norm};
use crate::Scalar;

#[derive(Debug, Clone)]
pub struct NnlsSolution<T> {
    pub coeffs: Vec<T>,
    /// `||E u - f||`
    pub residual_norm: T,
    pub iterations: usize,
}

/// Solves `min ||E u - f||` subject to `u >= 0`.
///
/// `columns[j]` is the j-th column of `E`; every column has `f.len()` rows.
pub fn nnls<T: Scalar>(columns: &[Vec<T>], f: &[T]) -> NnlsSolution<T> {
    let k = columns.len();
    let rows = f.len();
    let mut u = vec![T::zero(); k];
    if k == 0 {
        return NnlsSolution { coeffs: u, residual_norm: norm(f), iterations: 0 };
    }
    let col_scale = columns.iter().map(|c| norm(c)).fold(T::zero(), T::max);
    let tol = T::epsilon() * T::lit(1e3) * col_scale.max(T::one()) * norm(f).max(T::one());
    let mut passive = vec![false; k];
    let max_outer = 3 * k + 50;
    let mut iterations = 0;

    let residual = |u: &[T]| -> Vec<T> {
        let mut r = f.to_vec();
        for (c, &uj) in columns.iter().zip(u) {
            if uj != T::zero() {
                for (ri, &cij) in r.iter_mut().zip(c) {
                    *ri -= uj * cij;
                }
            }
        }
        r
    };

    for _ in 0..max_outer {
        iterations += 1;
        let r = residual(&u);
        let w: Vec<T> = columns.iter().map(|c| dot(c, &r)).collect();
        let entering = (0..k)
            .filter(|&j| !passive[j])
            .max_by(|&a, &b| w[a].partial_cmp(&w[b]).unwrap_or(std::cmp::Ordering::Equal));
        let Some(t) = entering else { break };
        if w[t] <= tol {
            break;
        }
        passive[t] = true;

        // Inner loop: keep the passive least-squares solution strictly positive.
        for _ in 0..(k + 10) {
            let p_idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let sub: Vec<&[T]> = p_idx.iter().map(|&j| columns[j].as_slice()).collect();
            let s_p = least_squares(&sub, f, rows);
            if s_p.iter().all(|&s| s > T::zero()) {
                for (&j, &s) in p_idx.iter().zip(&s_p) {
                    u[j] = s;
                }
                break;
            }
            let mut alpha = T::one();
            for (&j, &s) in p_idx.iter().zip(&s_p) {
                if s <= T::zero() {
                    let denom = u[j] - s;
                    if denom > T::zero() {
                        alpha = alpha.min(u[j] / denom);
                    } else {
                        alpha = T::zero();
                    }
                }
            }
            for (&j, &s) in p_idx.iter().zip(&s_p) {
                let uj = u[j];
                u[j] = uj + alpha * (s - uj);
                if u[j] <= tol {
                    u[j] = T::zero();
                    passive[j] = false;
                }
            }
            if p_idx.iter().all(|&j| passive[j]) {
                // Degenerate step (alpha hit no bound exactly); drop the most negative.
                let worst = p_idx
                    .iter()
                    .zip(&s_p)
                    .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                    .map(|(&j, _)| j)
                    .unwrap();
                u[worst] = T::zero();
                passive[worst] = false;
            }
        }
    }
    let residual_norm = norm(&residual(&u));
    NnlsSolution { coeffs: u, residual_norm, iterations }
}

/// Householder least squares `min ||A s - f||` for the given columns.
/// Rank-deficient directions get a zero coefficient.
fn least_squares<T: Scalar>(cols: &[&[T]], f: &[T], rows: usize) -> Vec<T> {
    let c = cols.len();
    let mut a: Vec<Vec<T>> = cols.iter().map(|col| col.to_vec()).collect();
    let mut rhs = f.to_vec();
    let mut diag = vec![T::zero(); c];
    let scale = a.iter().map(|col| norm(col)).fold(T::zero(), T::max).max(T::min_positive_value());
    for kk in 0..c.min(rows) {
        let alpha = a[kk][kk..].iter().map(|&v| v * v).sum::<T>().sqrt();
        if alpha <= T::epsilon() * scale {
            diag[kk] = T::zero();
            continue;
        }
        let sign = if a[kk][kk] >= T::zero() { T::one() } else { -T::one() };
        let mut v: Vec<T> = a[kk][kk..].to_vec();
        v[0] += sign * alpha;
        let vnorm2 = dot(&v, &v);
        diag[kk] = -sign * alpha;
        for col in a.iter_mut().skip(kk + 1) {
            let proj = dot(&v, &col[kk..]) * T::lit(2.0) / vnorm2;
            for (ci, &vi) in col[kk..].iter_mut().zip(&v) {
                *ci -= proj * vi;
            }
        }
        let proj = dot(&v, &rhs[kk..]) * T::lit(2.0) / vnorm2;
        for (ri, &vi) in rhs[kk..].iter_mut().zip(&v) {
            *ri -= proj * vi;
        }
    }
    let mut s = vec![T::zero(); c];
    for kk in (0..c.min(rows)).rev() {
        if diag[kk] == T::zero() {
            continue;
        }
        let mut acc = rhs[kk];
        for j in (kk + 1)..c.min(rows) {
            acc -= a[j][kk] * s[j];
        }
        s[kk] = acc / diag[kk];
    }
    s
}

/// Least-distance program: `min ||w||` subject to `G w >= h`, with `G` given
/// row-wise. Returns `None` when the constraints are infeasible.
pub fn least_distance<T: Scalar>(g_rows: &[Vec<T>], h: &[T]) -> Option<Vec<T>> {
    let n = g_rows.first().map_or(0, |r| r.len());
    let columns: Vec<Vec<T>> = g_rows
        .iter()
        .zip(h)
        .map(|(row, &hj)| {
            let mut col = row.clone();
            col.push(hj);
            col
        })
        .collect();
    let mut f = vec![T::zero(); n + 1];
    f[n] = T::one();
    let sol = nnls(&columns, &f);
    let mut r: Vec<T> = f.iter().map(|&v| -v).collect();
    for (col, &uj) in columns.iter().zip(&sol.coeffs) {
        for (ri, &ci) in r.iter_mut().zip(col) {
            *ri += uj * ci;
        }
    }
    if sol.residual_norm <= T::lit(1e3) * T::epsilon() || r[n].abs() <= T::epsilon() {
        return None;
    }
    Some(r[..n].iter().map(|&ri| -ri / r[n]).collect())
}
