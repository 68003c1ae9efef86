//! Allocation-free Hermitian helpers for small row-major matrices.
//!
//! The Monte Carlo loops factor millions of r x r Hermitian matrices with
//! r <= 8. Working in place on caller-owned buffers keeps those paths free of
//! per-draw allocations; `nalgebra` remains the route for anything larger or
//! spectral (eigendecompositions, reference checks in tests).

use num_complex::Complex64;

/// Writes `I + B B*` into `a` (row-major n x n) from row-major `b` (n x k).
pub(crate) fn identity_plus_bbh(b: &[Complex64], n: usize, k: usize, a: &mut [Complex64]) {
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(a.len(), n * n);
    for i in 0..n {
        for j in 0..=i {
            let mut acc = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            for l in 0..k {
                acc += b[i * k + l] * b[j * k + l].conj();
            }
            a[i * n + j] = acc;
            a[j * n + i] = acc.conj();
        }
    }
}

/// In-place lower Cholesky of a Hermitian positive definite matrix.
///
/// On success the lower triangle of `a` holds `L` with `L L* = A` and the
/// return value is `ln det A`. Returns `None` when a pivot is not strictly
/// positive, leaving `a` partially overwritten. The upper triangle is never
/// read.
pub(crate) fn cholesky_logdet(a: &mut [Complex64], n: usize) -> Option<f64> {
    debug_assert_eq!(a.len(), n * n);
    let mut logdet = 0.0;
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for l in 0..j {
            d -= a[j * n + l].norm_sqr();
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let root = d.sqrt();
        logdet += 2.0 * root.ln();
        a[j * n + j] = Complex64::new(root, 0.0);
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for l in 0..j {
                s -= a[i * n + l] * a[j * n + l].conj();
            }
            a[i * n + j] = s / root;
        }
    }
    Some(logdet)
}

/// Solves `L L* x = rhs` in place given a factor from [`cholesky_logdet`].
pub(crate) fn cholesky_solve(l: &[Complex64], n: usize, rhs: &mut [Complex64]) {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(rhs.len(), n);
    for i in 0..n {
        let mut s = rhs[i];
        for j in 0..i {
            s -= l[i * n + j] * rhs[j];
        }
        rhs[i] = s / l[i * n + i].re;
    }
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= l[j * n + i].conj() * rhs[j];
        }
        rhs[i] = s / l[i * n + i].re;
    }
}

/// Trace of `(L L*)^{-1}` given a factor from [`cholesky_logdet`].
///
/// Uses `tr((L L*)^{-1}) = ||L^{-1}||_F^2`, accumulated column by column with
/// forward substitution; `work` must hold `n` scratch entries.
pub(crate) fn cholesky_inverse_trace(l: &[Complex64], n: usize, work: &mut [Complex64]) -> f64 {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(work.len(), n);
    let mut trace = 0.0;
    for c in 0..n {
        for (i, w) in work.iter_mut().enumerate() {
            *w = if i == c {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        for i in c..n {
            let mut s = work[i];
            for j in c..i {
                s -= l[i * n + j] * work[j];
            }
            let col = s / l[i * n + i].re;
            work[i] = col;
            trace += col.norm_sqr();
        }
    }
    trace
}
