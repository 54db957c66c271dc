//! Symmetric-definite generalized eigensolver.
//!
//! Solves `A v = lambda B' v` for the smallest eigenpairs, where `B'` is `B`
//! plus a trace-scaled ridge. Kernel-space pencils are often rank deficient
//! (`B = K D K^T` has at most `rank(K)` positive directions), so instead of a
//! plain Cholesky reduction the solver first eigendecomposes `B`, drops the
//! numerical null space, and regularizes only the retained block. For the
//! pencils built in this crate `null(B)` is contained in `null(A)` (both
//! factor through the same kernel columns and `L = D - W` shares the support
//! of `D`), so discarding those directions loses nothing; keeping them would
//! let pure-gauge vectors with near-zero Rayleigh quotients crowd out every
//! informative eigenvector.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dense;
use crate::error::{Error, Result};

/// `B + theta * (tr(B) / m) * I`: a ridge proportional to the mean diagonal
/// mass, so the strength is invariant to the overall scale of `B`.
pub fn regularize(b: &DMatrix<f64>, theta: f64, m: usize) -> Result<DMatrix<f64>> {
    if b.nrows() != b.ncols() {
        return Err(Error::Shape(format!(
            "cannot regularize a {} x {} matrix",
            b.nrows(),
            b.ncols()
        )));
    }
    if m == 0 {
        return Err(Error::Param("regularizer denominator m must be positive".into()));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::Param(format!("theta must be nonnegative, got {theta}")));
    }
    let shift = theta * (b.trace() / m as f64);
    let mut out = b.clone();
    for i in 0..b.nrows() {
        out[(i, i)] += shift;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Ascending generalized eigenvalues, length `r`.
    pub eigenvalues: DVector<f64>,
    /// Matching eigenvectors as columns, `B'`-orthonormal, sign-normalized so
    /// the largest-magnitude entry of each column is positive.
    pub eigenvectors: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GeneralizedEigenProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    theta: f64,
}

const SYMMETRY_TOL: f64 = 1e-10;

impl GeneralizedEigenProblem {
    /// Both matrices must be square, same-sized, finite, and symmetric to a
    /// relative Frobenius tolerance of 1e-10. `theta >= 0` scales the ridge.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, theta: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != b.ncols() || a.nrows() != b.nrows() {
            return Err(Error::Shape(format!(
                "pencil needs equal square matrices, got {} x {} and {} x {}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("pencil matrices contain non-finite entries".into()));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::Param(format!("theta must be nonnegative, got {theta}")));
        }
        if dense::asymmetry(&a) > SYMMETRY_TOL {
            return Err(Error::Invariant("left pencil matrix is not symmetric".into()));
        }
        if dense::asymmetry(&b) > SYMMETRY_TOL {
            return Err(Error::Invariant("right pencil matrix is not symmetric".into()));
        }
        Ok(GeneralizedEigenProblem { a, b, theta })
    }

    pub fn size(&self) -> usize {
        self.a.nrows()
    }

    /// The `r` smallest eigenpairs of `A v = lambda B' v`.
    pub fn smallest_eigenvectors(&self, r: usize) -> Result<EigenSolution> {
        let m = self.size();
        if r == 0 || r > m {
            return Err(Error::Domain(format!(
                "requested {r} eigenvectors from a {m}-dimensional pencil"
            )));
        }
        let a_s = dense::symmetrize(&self.a);
        let b_s = dense::symmetrize(&self.b);

        let eig_b = SymmetricEigen::new(b_s);
        let lam_abs_max = eig_b
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if lam_abs_max == 0.0 {
            return Err(Error::Conditioning("right pencil matrix is zero".into()));
        }
        let rank_tol = lam_abs_max * m as f64 * f64::EPSILON;
        let mut kept = Vec::with_capacity(m);
        for (i, &lam) in eig_b.eigenvalues.iter().enumerate() {
            if lam > rank_tol {
                kept.push(i);
            } else if lam < -100.0 * rank_tol {
                return Err(Error::Conditioning(format!(
                    "right pencil matrix is not positive semidefinite (eigenvalue {lam:.3e})"
                )));
            }
        }
        let rank = kept.len();
        if rank < r {
            return Err(Error::Conditioning(format!(
                "pencil has numerical rank {rank}, cannot extract {r} eigenvectors"
            )));
        }

        let q = eig_b.eigenvectors.select_columns(kept.iter());
        let lam_kept: Vec<f64> = kept.iter().map(|&i| eig_b.eigenvalues[i]).collect();
        // Ridge on the retained block; for full-rank B this matches ridging
        // before the decomposition exactly.
        let shift = self.theta * (lam_kept.iter().sum::<f64>() / rank as f64);
        let weights: Vec<f64> = lam_kept.iter().map(|&l| 1.0 / (l + shift).sqrt()).collect();

        // C = W Q^T A Q W is symmetric; its ordinary eigenpairs map back via
        // v = Q W s, which are B'-orthonormal by construction.
        let mut c = q.transpose() * &a_s * &q;
        for i in 0..rank {
            for j in 0..rank {
                c[(i, j)] *= weights[i] * weights[j];
            }
        }
        let c = dense::symmetrize(&c);
        let eig_c = SymmetricEigen::new(c);

        let mut order: Vec<usize> = (0..rank).collect();
        order.sort_by(|&i, &j| eig_c.eigenvalues[i].total_cmp(&eig_c.eigenvalues[j]).then(i.cmp(&j)));

        let mut eigenvalues = DVector::<f64>::zeros(r);
        let mut eigenvectors = DMatrix::<f64>::zeros(m, r);
        for (col, &idx) in order.iter().take(r).enumerate() {
            eigenvalues[col] = eig_c.eigenvalues[idx];
            let mut s = eig_c.eigenvectors.column(idx).clone_owned();
            for i in 0..rank {
                s[i] *= weights[i];
            }
            let v = &q * s;
            eigenvectors.set_column(col, &v);
        }
        fix_signs(&mut eigenvectors);
        Ok(EigenSolution {
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Flip columns so the entry of largest magnitude (first such entry on ties)
/// is positive. Removes the sign ambiguity of eigenvectors.
pub fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = 0.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}
