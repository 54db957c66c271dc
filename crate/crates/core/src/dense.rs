//! Dense distance kernels used throughout the crate.
//!
//! Every entry is computed as an independent sum over one column pair, so the
//! parallel versions are bitwise identical to the sequential ones: work is
//! split over output columns and no floating-point reduction ever crosses a
//! thread boundary.

use nalgebra::DMatrix;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (p, q) in a.iter().zip(b.iter()) {
        let t = p - q;
        acc += t * t;
    }
    acc
}

fn fill_pairwise_column(x: &[f64], d: usize, j: usize, out: &mut [f64]) {
    let xj = &x[j * d..(j + 1) * d];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = if i == j {
            0.0
        } else {
            sq_dist(&x[i * d..(i + 1) * d], xj)
        };
    }
}

/// All squared Euclidean distances between the columns of `x`.
///
/// The result is exactly symmetric with an exactly zero diagonal; entries of
/// a pair are evaluated by the same element order, so no clamping is needed.
pub fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    #[cfg(feature = "parallel")]
    {
        pairwise_sq_dists_par(x)
    }
    #[cfg(not(feature = "parallel"))]
    {
        pairwise_sq_dists_seq(x)
    }
}

pub fn pairwise_sq_dists_seq(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = (x.nrows(), x.ncols());
    let mut out = DMatrix::<f64>::zeros(n, n);
    let data = x.as_slice();
    for j in 0..n {
        fill_pairwise_column(data, d, j, &mut out.as_mut_slice()[j * n..(j + 1) * n]);
    }
    out
}

#[cfg(feature = "parallel")]
pub fn pairwise_sq_dists_par(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = (x.nrows(), x.ncols());
    let mut out = DMatrix::<f64>::zeros(n, n);
    let data = x.as_slice();
    out.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(j, col)| fill_pairwise_column(data, d, j, col));
    out
}

fn fill_cross_column(a: &[f64], d: usize, b_col: &[f64], out: &mut [f64]) {
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = sq_dist(&a[i * d..(i + 1) * d], b_col);
    }
}

/// Squared Euclidean distances between columns of `a` (rows of the result)
/// and columns of `b` (columns of the result).
pub fn cross_sq_dists(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows(), "dimension mismatch in cross distances");
    #[cfg(feature = "parallel")]
    {
        cross_sq_dists_par(a, b)
    }
    #[cfg(not(feature = "parallel"))]
    {
        cross_sq_dists_seq(a, b)
    }
}

pub fn cross_sq_dists_seq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let (na, nb) = (a.ncols(), b.ncols());
    let mut out = DMatrix::<f64>::zeros(na, nb);
    for j in 0..nb {
        let b_col = &b.as_slice()[j * d..(j + 1) * d];
        fill_cross_column(
            a.as_slice(),
            d,
            b_col,
            &mut out.as_mut_slice()[j * na..(j + 1) * na],
        );
    }
    out
}

#[cfg(feature = "parallel")]
pub fn cross_sq_dists_par(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let (na, nb) = (a.ncols(), b.ncols());
    let mut out = DMatrix::<f64>::zeros(na, nb);
    out.as_mut_slice()
        .par_chunks_mut(na)
        .enumerate()
        .for_each(|(j, col)| {
            let b_col = &b.as_slice()[j * d..(j + 1) * d];
            fill_cross_column(a.as_slice(), d, b_col, col);
        });
    out
}

/// Frobenius inner product `<a, b> = sum_ij a_ij b_ij`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.dot(b)
}

/// `(m + m^T) / 2`, removing floating-point asymmetry before eigensolves.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Relative Frobenius asymmetry `||m - m^T|| / ||m||` (0 for the zero matrix).
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let norm = m.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / norm
}
