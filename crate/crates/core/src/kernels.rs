//! Multi-kernel machinery: a bank of Gaussian kernels on a shared distance
//! scale, alignment against the ideal label kernel, and convex fusion.
//!
//! All bandwidths are expressed as `c * mu` where `mu` is the mean squared
//! distance over distinct sample pairs, so the grid of `c` factors transfers
//! across datasets without retuning.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dense;
use crate::error::{Error, Result};
use crate::util::sha256_hex;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Kernel family of one bank member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelKind {
    /// `exp(-||x_i - x_j||^2 / (c * mu))`.
    Gaussian { c: f64 },
    /// Plain inner product; turns the kernel path into the linear one.
    Linear,
}

/// Precomputed kernel matrices over one training set, all sharing `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    kinds: Vec<KernelKind>,
    matrices: Vec<DMatrix<f64>>,
    mu: f64,
}

impl KernelBank {
    /// Assemble a bank from precomputed members. Sizes must agree and be
    /// square; intended for tests and for non-Gaussian members.
    pub fn from_members(
        kinds: Vec<KernelKind>,
        matrices: Vec<DMatrix<f64>>,
        mu: f64,
    ) -> Result<Self> {
        if kinds.is_empty() || kinds.len() != matrices.len() {
            return Err(Error::Shape(format!(
                "bank needs matching nonempty kinds/matrices, got {} and {}",
                kinds.len(),
                matrices.len()
            )));
        }
        let n = matrices[0].nrows();
        for m in &matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape("bank members must be square and same-size".into()));
            }
        }
        Ok(KernelBank {
            kinds,
            matrices,
            mu,
        })
    }

    pub fn kinds(&self) -> &[KernelKind] {
        &self.kinds
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.matrices
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn member_count(&self) -> usize {
        self.kinds.len()
    }

    pub fn sample_count(&self) -> usize {
        self.matrices[0].nrows()
    }

    /// Restriction of member `m` to the given rows and columns.
    pub fn member_block(&self, m: usize, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        self.matrices[m]
            .select_rows(rows.iter())
            .select_columns(cols.iter())
    }
}

/// Mean squared distance over ordered distinct pairs; the shared bandwidth
/// scale. Zero when all samples coincide (including the single-sample case).
pub fn mean_sq_dist(dists: &DMatrix<f64>) -> f64 {
    let n = dists.nrows();
    if n < 2 {
        return 0.0;
    }
    dists.sum() / ((n * (n - 1)) as f64)
}

fn gaussian_entry(dist: f64, c: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        // Limit of exp(-d / (c * mu)) as mu -> 0+: 1 on zero distance, 0 off.
        if dist == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        (-dist / (c * mu)).exp()
    }
}

fn gaussian_from_dists(dists: &DMatrix<f64>, c: f64, mu: f64) -> DMatrix<f64> {
    dists.map(|d| gaussian_entry(d, c, mu))
}

/// Gaussian kernel over the columns of `x` with bandwidth `c * mu`, `mu`
/// computed from `x` itself. When every sample coincides the zero-bandwidth
/// limit (the all-ones matrix) is returned.
pub fn gaussian_kernel(x: &DMatrix<f64>, c: f64) -> Result<DMatrix<f64>> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Param(format!("bandwidth factor must be positive, got {c}")));
    }
    let dists = dense::pairwise_sq_dists(x);
    let mu = mean_sq_dist(&dists);
    Ok(gaussian_from_dists(&dists, c, mu))
}

/// Build the Gaussian bank for every `c` in the grid. The pairwise distances
/// and `mu` are computed once and shared. All-coincident data has no usable
/// distance scale and is rejected.
pub fn build_bank(x: &DMatrix<f64>, c_grid: &[f64]) -> Result<KernelBank> {
    #[cfg(feature = "parallel")]
    {
        build_bank_par(x, c_grid)
    }
    #[cfg(not(feature = "parallel"))]
    {
        build_bank_seq(x, c_grid)
    }
}

fn bank_dists(x: &DMatrix<f64>, c_grid: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    if c_grid.is_empty() {
        return Err(Error::Param("bandwidth grid is empty".into()));
    }
    for &c in c_grid {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Param(format!("bandwidth factor must be positive, got {c}")));
        }
    }
    let dists = dense::pairwise_sq_dists(x);
    let mu = mean_sq_dist(&dists);
    if mu == 0.0 {
        return Err(Error::Degenerate(
            "all samples coincide; mean squared distance is zero".into(),
        ));
    }
    Ok((dists, mu))
}

pub fn build_bank_seq(x: &DMatrix<f64>, c_grid: &[f64]) -> Result<KernelBank> {
    let (dists, mu) = bank_dists(x, c_grid)?;
    let matrices: Vec<DMatrix<f64>> = c_grid
        .iter()
        .map(|&c| gaussian_from_dists(&dists, c, mu))
        .collect();
    KernelBank::from_members(
        c_grid.iter().map(|&c| KernelKind::Gaussian { c }).collect(),
        matrices,
        mu,
    )
}

#[cfg(feature = "parallel")]
pub fn build_bank_par(x: &DMatrix<f64>, c_grid: &[f64]) -> Result<KernelBank> {
    let (dists, mu) = bank_dists(x, c_grid)?;
    let matrices: Vec<DMatrix<f64>> = c_grid
        .par_iter()
        .map(|&c| gaussian_from_dists(&dists, c, mu))
        .collect();
    KernelBank::from_members(
        c_grid.iter().map(|&c| KernelKind::Gaussian { c }).collect(),
        matrices,
        mu,
    )
}

/// Ideal kernel of a labeled set: 1 where two samples share a person, else 0.
pub fn ideal_kernel(person_ids: &[i64]) -> DMatrix<f64> {
    let n = person_ids.len();
    DMatrix::from_fn(n, n, |i, j| {
        if person_ids[i] == person_ids[j] {
            1.0
        } else {
            0.0
        }
    })
}

/// Normalized Frobenius alignment `<A, B> / sqrt(<A, A> <B, B>)`.
pub fn alignment_score(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "alignment of {:?} against {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let aa = dense::frob_inner(a, a);
    let bb = dense::frob_inner(b, b);
    if aa <= 0.0 || bb <= 0.0 {
        return Err(Error::Degenerate(
            "alignment undefined for a zero-norm kernel".into(),
        ));
    }
    Ok(dense::frob_inner(a, b) / (aa * bb).sqrt())
}

/// Convex fusion weights: each member's alignment between its labeled block
/// and the ideal kernel, normalized to sum to one.
pub fn kernel_weights(
    bank: &KernelBank,
    ideal: &DMatrix<f64>,
    labeled: &[usize],
) -> Result<DVector<f64>> {
    if ideal.nrows() != labeled.len() {
        return Err(Error::Shape(format!(
            "ideal kernel is {} x {} but there are {} labeled samples",
            ideal.nrows(),
            ideal.ncols(),
            labeled.len()
        )));
    }
    let mut scores = DVector::<f64>::zeros(bank.member_count());
    for m in 0..bank.member_count() {
        let block = bank.member_block(m, labeled, labeled);
        let s = alignment_score(&block, ideal)?;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Degenerate(format!(
                "kernel {m} has non-positive alignment {s}"
            )));
        }
        scores[m] = s;
    }
    let total: f64 = scores.sum();
    Ok(scores / total)
}

/// A fused kernel over the full training set together with the index split
/// it was built for.
#[derive(Debug, Clone)]
pub struct FusedKernel {
    matrix: DMatrix<f64>,
    beta: DVector<f64>,
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
}

impl FusedKernel {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    /// All kernel rows against the labeled columns, `(n + u) x n`.
    pub fn k_labeled(&self) -> DMatrix<f64> {
        self.matrix.select_columns(self.labeled.iter())
    }

    /// All kernel rows against the unlabeled columns, `(n + u) x u`.
    pub fn k_unlabeled(&self) -> DMatrix<f64> {
        self.matrix.select_columns(self.unlabeled.iter())
    }
}

/// `K = sum_m beta_m K_m`. Weights must be positive and sum to one; labeled
/// and unlabeled indices must partition the bank's sample range.
pub fn fuse(
    bank: &KernelBank,
    beta: &DVector<f64>,
    labeled: &[usize],
    unlabeled: &[usize],
) -> Result<FusedKernel> {
    if beta.len() != bank.member_count() {
        return Err(Error::Shape(format!(
            "{} weights for {} kernels",
            beta.len(),
            bank.member_count()
        )));
    }
    for b in beta.iter() {
        if !(*b > 0.0) || !b.is_finite() {
            return Err(Error::Param(format!("fusion weights must be positive, got {b}")));
        }
    }
    if (beta.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::Param(format!(
            "fusion weights must sum to one, got {}",
            beta.sum()
        )));
    }
    let n = bank.sample_count();
    let mut seen = vec![false; n];
    for &i in labeled.iter().chain(unlabeled.iter()) {
        if i >= n || seen[i] {
            return Err(Error::Shape(
                "labeled/unlabeled indices must partition the sample range".into(),
            ));
        }
        seen[i] = true;
    }
    if !seen.iter().all(|&s| s) || labeled.is_empty() {
        return Err(Error::Shape(
            "labeled/unlabeled indices must cover every sample, labeled nonempty".into(),
        ));
    }
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for (m, k) in bank.matrices().iter().enumerate() {
        matrix += k * beta[m];
    }
    Ok(FusedKernel {
        matrix,
        beta: beta.clone(),
        labeled: labeled.to_vec(),
        unlabeled: unlabeled.to_vec(),
    })
}

/// Kernel columns of new samples `z` against `train`, fused with the stored
/// weights and the training-time `mu`. Result is `train columns x z columns`.
pub fn fused_cross_kernel(
    train: &DMatrix<f64>,
    z: &DMatrix<f64>,
    kinds: &[KernelKind],
    beta: &DVector<f64>,
    mu: f64,
) -> Result<DMatrix<f64>> {
    if train.nrows() != z.nrows() {
        return Err(Error::Shape(format!(
            "train samples have dimension {}, queries {}",
            train.nrows(),
            z.nrows()
        )));
    }
    if kinds.len() != beta.len() || kinds.is_empty() {
        return Err(Error::Shape("kernel kinds and weights must match and be nonempty".into()));
    }
    let needs_dists = kinds.iter().any(|k| matches!(k, KernelKind::Gaussian { .. }));
    let dists = if needs_dists {
        Some(dense::cross_sq_dists(train, z))
    } else {
        None
    };
    let mut out = DMatrix::<f64>::zeros(train.ncols(), z.ncols());
    for (m, kind) in kinds.iter().enumerate() {
        match kind {
            KernelKind::Gaussian { c } => {
                let d = dists.as_ref().unwrap();
                out.zip_apply(d, |acc, dist| *acc += beta[m] * gaussian_entry(dist, *c, mu));
            }
            KernelKind::Linear => {
                let lin = train.transpose() * z;
                out.zip_apply(&lin, |acc, v| *acc += beta[m] * v);
            }
        }
    }
    Ok(out)
}

/// Like [`build_bank`] but backed by an on-disk cache keyed by the exact
/// training bytes and grid. Useful when the same training set is revisited.
pub fn build_bank_with_cache(
    x: &DMatrix<f64>,
    c_grid: &[f64],
    cache_dir: &Path,
) -> Result<KernelBank> {
    let key = bank_cache_key(x, c_grid);
    let path = cache_dir.join(format!("bank-{key}.bin"));
    if path.is_file() {
        match read_bank(&path) {
            Ok(bank)
                if bank.sample_count() == x.ncols()
                    && bank.member_count() == c_grid.len() =>
            {
                return Ok(bank);
            }
            _ => log::warn!("ignoring unreadable kernel cache entry {}", path.display()),
        }
    }
    let bank = build_bank(x, c_grid)?;
    std::fs::create_dir_all(cache_dir)?;
    let tmp = cache_dir.join(format!("bank-{key}.tmp.{}", std::process::id()));
    write_bank(&bank, &tmp)?;
    std::fs::rename(&tmp, &path)?;
    Ok(bank)
}

fn bank_cache_key(x: &DMatrix<f64>, c_grid: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(16 + 8 * (x.len() + c_grid.len()));
    bytes.extend_from_slice(&(x.nrows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(x.ncols() as u64).to_le_bytes());
    for v in x.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for c in c_grid {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    sha256_hex(&bytes)
}

const BANK_MAGIC: &[u8; 4] = b"MKKB";

fn write_bank(bank: &KernelBank, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(BANK_MAGIC)?;
    out.write_all(&[1u8])?;
    out.write_all(&bank.mu().to_le_bytes())?;
    out.write_all(&(bank.member_count() as u64).to_le_bytes())?;
    out.write_all(&(bank.sample_count() as u64).to_le_bytes())?;
    for (kind, m) in bank.kinds().iter().zip(bank.matrices()) {
        let c = match kind {
            KernelKind::Gaussian { c } => {
                out.write_all(&[0u8])?;
                *c
            }
            KernelKind::Linear => {
                out.write_all(&[1u8])?;
                0.0
            }
        };
        out.write_all(&c.to_le_bytes())?;
        for v in m.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_bank(path: &Path) -> Result<KernelBank> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != BANK_MAGIC {
        return Err(Error::Format("bad kernel cache magic".into()));
    }
    let mut b1 = [0u8; 1];
    input.read_exact(&mut b1)?;
    if b1[0] != 1 {
        return Err(Error::Version(format!("kernel cache version {}", b1[0])));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let mu = f64::from_le_bytes(b8);
    input.read_exact(&mut b8)?;
    let members = u64::from_le_bytes(b8) as usize;
    input.read_exact(&mut b8)?;
    let n = u64::from_le_bytes(b8) as usize;
    let mut kinds = Vec::with_capacity(members);
    let mut matrices = Vec::with_capacity(members);
    for _ in 0..members {
        input.read_exact(&mut b1)?;
        input.read_exact(&mut b8)?;
        let c = f64::from_le_bytes(b8);
        kinds.push(match b1[0] {
            0 => KernelKind::Gaussian { c },
            1 => KernelKind::Linear,
            other => return Err(Error::Format(format!("unknown kernel kind byte {other}"))),
        });
        let mut values = vec![0.0f64; n * n];
        for v in values.iter_mut() {
            input.read_exact(&mut b8)?;
            *v = f64::from_le_bytes(b8);
        }
        matrices.push(DMatrix::from_vec(n, n, values));
    }
    KernelBank::from_members(kinds, matrices, mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_kernel_matches_hand_value() {
        // Two 1-D points at distance 1: mu = 1, so K_01 = exp(-1 / c).
        let x = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let k = gaussian_kernel(&x, 2.0).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 1.0);
        assert!((k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(k[(0, 1)], k[(1, 0)]);
    }

    #[test]
    fn gaussian_kernel_degenerate_limits() {
        // Identical columns: zero distance everywhere, all-ones kernel.
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 3.0, -1.0, -1.0]);
        let k = gaussian_kernel(&x, 2.5).unwrap();
        assert_eq!(k, DMatrix::from_element(2, 2, 1.0));
        // Single column.
        let x1 = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        assert_eq!(gaussian_kernel(&x1, 2.0).unwrap(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn bank_shares_mu_and_orders_entries_by_bandwidth() {
        let x = DMatrix::from_fn(3, 8, |i, j| ((i + 1) * (j + 2)) as f64 * 0.31);
        let grid = crate::data::default_c_grid();
        let bank = build_bank(&x, &grid).unwrap();
        assert_eq!(bank.member_count(), 11);
        let dists = dense::pairwise_sq_dists(&x);
        let mu = mean_sq_dist(&dists);
        assert_eq!(bank.mu(), mu);
        // Off-diagonal entries grow with c (milder decay), diagonal stays 1.
        for m in 1..bank.member_count() {
            let (a, b) = (&bank.matrices()[m - 1], &bank.matrices()[m]);
            for i in 0..8 {
                assert_eq!(b[(i, i)], 1.0);
                for j in 0..8 {
                    if i != j {
                        assert!(b[(i, j)] >= a[(i, j)]);
                        assert!(b[(i, j)] > 0.0 && b[(i, j)] <= 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn bank_rejects_coincident_samples() {
        let x = DMatrix::from_element(4, 3, 2.0);
        let err = build_bank(&x, &[2.0]).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn seq_and_par_banks_agree() {
        let x = DMatrix::from_fn(4, 10, |i, j| ((i * 5 + j * 3) % 7) as f64 - 2.0);
        let s = build_bank_seq(&x, &[2.0, 2.5, 3.0]).unwrap();
        #[cfg(feature = "parallel")]
        {
            let p = build_bank_par(&x, &[2.0, 2.5, 3.0]).unwrap();
            assert_eq!(s, p);
        }
        assert_eq!(build_bank(&x, &[2.0, 2.5, 3.0]).unwrap(), s);
    }

    #[test]
    fn ideal_kernel_matches_example() {
        let k = ideal_kernel(&[1, 2, 1]);
        let expected =
            DMatrix::from_row_slice(3, 3, &[1., 0., 1., 0., 1., 0., 1., 0., 1.]);
        assert_eq!(k, expected);
    }

    #[test]
    fn alignment_self_scale_and_bounds() {
        let x = DMatrix::from_fn(3, 6, |i, j| ((i * 2 + j) as f64).cos() + 1.5);
        let k = gaussian_kernel(&x, 2.0).unwrap();
        assert!((alignment_score(&k, &k).unwrap() - 1.0).abs() < 1e-12);
        let kd = ideal_kernel(&[1, 1, 2, 2, 3, 3]);
        let a = alignment_score(&k, &kd).unwrap();
        assert!(a > 0.0 && a <= 1.0);
        // Scale invariance in either argument.
        let a2 = alignment_score(&(2.0 * &k), &kd).unwrap();
        assert!((a - a2).abs() < 1e-12);
        // Zero-norm input is rejected.
        let z = DMatrix::zeros(3, 3);
        assert!(matches!(
            alignment_score(&z, &ideal_kernel(&[1, 2, 3])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn weights_sum_to_one_and_follow_alignment() {
        let x = DMatrix::from_fn(3, 8, |i, j| ((i + j * j) % 5) as f64 * 0.7);
        let bank = build_bank(&x, &[2.0, 2.5, 3.0]).unwrap();
        let labeled: Vec<usize> = (0..8).collect();
        let kd = ideal_kernel(&[1, 1, 2, 2, 3, 3, 4, 4]);
        let beta = kernel_weights(&bank, &kd, &labeled).unwrap();
        assert!((beta.sum() - 1.0).abs() < 1e-12);
        for b in beta.iter() {
            assert!(*b > 0.0);
        }
        // Weights are proportional to the raw alignment scores.
        let s0 = alignment_score(&bank.member_block(0, &labeled, &labeled), &kd).unwrap();
        let s1 = alignment_score(&bank.member_block(1, &labeled, &labeled), &kd).unwrap();
        assert!((beta[0] / beta[1] - s0 / s1).abs() < 1e-10);
    }

    #[test]
    fn duplicated_bank_halves_weights_and_keeps_fusion() {
        let x = DMatrix::from_fn(2, 6, |i, j| ((i * 3 + j) as f64).sin() * 2.0);
        let grid = crate::data::default_c_grid();
        let bank = build_bank(&x, &grid).unwrap();
        let doubled_grid: Vec<f64> = grid.iter().chain(grid.iter()).copied().collect();
        let doubled = build_bank(&x, &doubled_grid).unwrap();
        let labeled: Vec<usize> = (0..4).collect();
        let unlabeled: Vec<usize> = (4..6).collect();
        let kd = ideal_kernel(&[1, 1, 2, 2]);
        let beta = kernel_weights(&bank, &kd, &labeled).unwrap();
        let beta2 = kernel_weights(&doubled, &kd, &labeled).unwrap();
        for m in 0..bank.member_count() {
            assert!((beta2[m] - beta[m] / 2.0).abs() < 1e-12);
            assert!((beta2[m + bank.member_count()] - beta[m] / 2.0).abs() < 1e-12);
        }
        let f1 = fuse(&bank, &beta, &labeled, &unlabeled).unwrap();
        let f2 = fuse(&doubled, &beta2, &labeled, &unlabeled).unwrap();
        assert!((f1.matrix() - f2.matrix()).norm() < 1e-12);
    }

    #[test]
    fn fused_kernel_stays_psd() {
        // Random PSD members R^T R with convex weights stay PSD.
        let mut state = 1u64;
        let mut next = move || {
            state = crate::util::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut kinds = Vec::new();
        let mut mats = Vec::new();
        for _ in 0..4 {
            let r = DMatrix::from_fn(6, 6, |_, _| next());
            mats.push(r.transpose() * &r);
            kinds.push(KernelKind::Linear);
        }
        let bank = KernelBank::from_members(kinds, mats, 1.0).unwrap();
        let beta = DVector::from_vec(vec![0.4, 0.3, 0.2, 0.1]);
        let labeled: Vec<usize> = (0..3).collect();
        let unlabeled: Vec<usize> = (3..6).collect();
        let fused = fuse(&bank, &beta, &labeled, &unlabeled).unwrap();
        let k = crate::dense::symmetrize(fused.matrix());
        let norm = k.norm();
        let eig = nalgebra::SymmetricEigen::new(k);
        for v in eig.eigenvalues.iter() {
            assert!(*v >= -1e-8 * norm, "fused kernel eigenvalue {v}");
        }
    }

    #[test]
    fn fuse_validates_weights_and_partition() {
        let x = DMatrix::from_fn(2, 4, |i, j| (i + j) as f64);
        let bank = build_bank(&x, &[2.0, 3.0]).unwrap();
        let bad = DVector::from_vec(vec![0.7, 0.7]);
        assert!(fuse(&bank, &bad, &[0, 1], &[2, 3]).is_err());
        let neg = DVector::from_vec(vec![1.5, -0.5]);
        assert!(fuse(&bank, &neg, &[0, 1], &[2, 3]).is_err());
        let good = DVector::from_vec(vec![0.5, 0.5]);
        assert!(fuse(&bank, &good, &[0, 1], &[2, 2]).is_err()); // repeated index
        assert!(fuse(&bank, &good, &[0, 1], &[2]).is_err()); // missing 3
        assert!(fuse(&bank, &good, &[0, 1], &[2, 3]).is_ok());
    }

    #[test]
    fn cross_kernel_on_training_points_reproduces_fused_matrix() {
        let x = DMatrix::from_fn(3, 7, |i, j| ((i * 11 + j * 5) % 9) as f64 * 0.4 - 1.0);
        let bank = build_bank(&x, &[2.0, 2.2, 2.9]).unwrap();
        let labeled: Vec<usize> = (0..5).collect();
        let unlabeled: Vec<usize> = (5..7).collect();
        let kd = ideal_kernel(&[1, 1, 2, 2, 3]);
        let beta = kernel_weights(&bank, &kd, &labeled).unwrap();
        let fused = fuse(&bank, &beta, &labeled, &unlabeled).unwrap();
        let cross = fused_cross_kernel(&x, &x, bank.kinds(), &beta, bank.mu()).unwrap();
        assert_eq!(&cross, fused.matrix());
    }

    #[test]
    fn bank_cache_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let x = DMatrix::from_fn(4, 9, |i, j| ((i * 3 + j * 7) % 13) as f64 * 0.23);
        let grid = [2.0, 2.4, 3.0];
        let fresh = build_bank_with_cache(&x, &grid, dir.path()).unwrap();
        let direct = build_bank(&x, &grid).unwrap();
        assert_eq!(fresh, direct);
        // Second call must come from the cache file and be identical.
        let cached = build_bank_with_cache(&x, &grid, dir.path()).unwrap();
        assert_eq!(cached, direct);
        let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }
}
