//! Dense vector helpers over slices.

use crate::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm1<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|v| v.abs()).sum()
}

pub fn dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn scale<T: Scalar>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `a + s * (b - a)`
pub fn lerp<T: Scalar>(a: &[T], b: &[T], s: T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x + s * (y - x)).collect()
}

/// Euclidean norm of the positive part.
pub fn pos_norm<T: Scalar>(a: &[T]) -> T {
    a.iter().map(|v| v.pos() * v.pos()).sum::<T>().sqrt()
}

/// `Jᵀ w` for a row-major Jacobian with `J.len() == w.len()`.
pub fn jac_t_mul<T: Scalar>(jac: &[Vec<T>], w: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (row, &wi) in jac.iter().zip(w) {
        if wi != T::zero() {
            axpy(wi, row, &mut out);
        }
    }
    out
}
