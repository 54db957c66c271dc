//! Affinity graphs and their Laplacians.
//!
//! Two graph flavours drive the objective: a label graph connecting samples
//! of the same person (diagonal included), and a pseudo graph connecting
//! mutual-or-one-sided k-nearest neighbours across camera views (diagonal
//! zero, never within a view). Both are binary and exactly symmetric.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::dense;
use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphRole {
    /// Same-person edges over labeled samples.
    Labeled,
    /// Cross-view nearest-neighbour edges over unlabeled samples.
    Pseudo,
}

/// A validated binary adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    matrix: DMatrix<f64>,
    role: GraphRole,
}

impl WeightMatrix {
    /// Checks squareness, exact symmetry, 0/1 entries, and (for pseudo
    /// graphs) a zero diagonal.
    pub fn new(matrix: DMatrix<f64>, role: GraphRole) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::Shape(format!(
                "weight matrix must be square, got {} x {}",
                n,
                matrix.ncols()
            )));
        }
        for j in 0..n {
            for i in 0..n {
                let v = matrix[(i, j)];
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Invariant(format!(
                        "weight ({i}, {j}) = {v}, expected 0 or 1"
                    )));
                }
                if matrix[(j, i)] != v {
                    return Err(Error::Invariant(format!(
                        "weights are asymmetric at ({i}, {j})"
                    )));
                }
            }
            if role == GraphRole::Pseudo && matrix[(j, j)] != 0.0 {
                return Err(Error::Invariant(format!(
                    "pseudo graph has a nonzero diagonal at {j}"
                )));
            }
        }
        Ok(WeightMatrix { matrix, role })
    }

    /// Edgeless graph on `n` nodes.
    pub fn empty(n: usize, role: GraphRole) -> Self {
        WeightMatrix {
            matrix: DMatrix::zeros(n, n),
            role,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn role(&self) -> GraphRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of undirected off-diagonal edges.
    pub fn edge_count(&self) -> usize {
        let n = self.len();
        let mut count = 0;
        for j in 0..n {
            for i in 0..j {
                if self.matrix[(i, j)] == 1.0 {
                    count += 1;
                }
            }
        }
        count
    }
}

/// Label graph: `W_ij = 1` iff samples `i` and `j` share a person id. Every
/// sample shares an id with itself, so the diagonal is all ones.
pub fn label_weights(person_ids: &[i64]) -> WeightMatrix {
    let n = person_ids.len();
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if person_ids[i] == person_ids[j] {
            1.0
        } else {
            0.0
        }
    });
    WeightMatrix {
        matrix,
        role: GraphRole::Labeled,
    }
}

fn knn_neighbor_list(
    dists: &DMatrix<f64>,
    view_ids: &[u32],
    k: usize,
    i: usize,
) -> Result<Vec<usize>> {
    let mut candidates: Vec<(f64, usize)> = (0..view_ids.len())
        .filter(|&j| view_ids[j] != view_ids[i])
        .map(|j| (dists[(i, j)], j))
        .collect();
    if candidates.len() < k {
        return Err(Error::Param(format!(
            "sample {i} has only {} opposite-view candidates, need k = {k}",
            candidates.len()
        )));
    }
    // Ties resolve to the lower sample index, making the graph deterministic.
    candidates.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(candidates[..k].iter().map(|&(_, j)| j).collect())
}

fn knn_from_lists(lists: Vec<Result<Vec<usize>>>, n: usize) -> Result<WeightMatrix> {
    let mut matrix = DMatrix::<f64>::zeros(n, n);
    for (i, list) in lists.into_iter().enumerate() {
        for j in list? {
            // One-sided hits are enough: i in N(j) or j in N(i).
            matrix[(i, j)] = 1.0;
            matrix[(j, i)] = 1.0;
        }
    }
    WeightMatrix::new(matrix, GraphRole::Pseudo)
}

/// Pseudo graph over the columns of `z` (samples in some embedded space):
/// an edge joins `i` and `j` when either is among the `k` nearest
/// opposite-view samples of the other. Same-view pairs never connect.
pub fn knn_cross_view_weights(
    z: &DMatrix<f64>,
    view_ids: &[u32],
    k: usize,
) -> Result<WeightMatrix> {
    #[cfg(feature = "parallel")]
    {
        knn_cross_view_weights_par(z, view_ids, k)
    }
    #[cfg(not(feature = "parallel"))]
    {
        knn_cross_view_weights_seq(z, view_ids, k)
    }
}

fn knn_validate(z: &DMatrix<f64>, view_ids: &[u32], k: usize) -> Result<()> {
    if view_ids.len() != z.ncols() {
        return Err(Error::Shape(format!(
            "{} view ids for {} samples",
            view_ids.len(),
            z.ncols()
        )));
    }
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    let mut views: Vec<u32> = view_ids.to_vec();
    views.sort_unstable();
    views.dedup();
    if views.len() < 2 {
        return Err(Error::Param(
            "cross-view neighbours need at least two views".into(),
        ));
    }
    Ok(())
}

pub fn knn_cross_view_weights_seq(
    z: &DMatrix<f64>,
    view_ids: &[u32],
    k: usize,
) -> Result<WeightMatrix> {
    knn_validate(z, view_ids, k)?;
    let dists = dense::pairwise_sq_dists_seq(z);
    let lists: Vec<Result<Vec<usize>>> = (0..z.ncols())
        .map(|i| knn_neighbor_list(&dists, view_ids, k, i))
        .collect();
    knn_from_lists(lists, z.ncols())
}

#[cfg(feature = "parallel")]
pub fn knn_cross_view_weights_par(
    z: &DMatrix<f64>,
    view_ids: &[u32],
    k: usize,
) -> Result<WeightMatrix> {
    knn_validate(z, view_ids, k)?;
    let dists = dense::pairwise_sq_dists_par(z);
    let lists: Vec<Result<Vec<usize>>> = (0..z.ncols())
        .into_par_iter()
        .map(|i| knn_neighbor_list(&dists, view_ids, k, i))
        .collect();
    knn_from_lists(lists, z.ncols())
}

/// Unnormalized graph Laplacian `L = D - W` together with the degree vector.
#[derive(Debug, Clone)]
pub struct LaplacianPair {
    pub laplacian: DMatrix<f64>,
    pub degrees: DVector<f64>,
}

pub fn laplacian(w: &WeightMatrix) -> LaplacianPair {
    let n = w.len();
    let m = w.matrix();
    let degrees = DVector::from_fn(n, |i, _| m.row(i).sum());
    let mut laplacian = -m.clone();
    for i in 0..n {
        laplacian[(i, i)] += degrees[i];
    }
    LaplacianPair { laplacian, degrees }
}

/// Count of undirected pairs whose connectivity differs between `a` and `b`,
/// plus the size of the union of both edge sets (for relative change).
pub fn edge_difference(a: &WeightMatrix, b: &WeightMatrix) -> Result<(usize, usize)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "cannot compare graphs on {} and {} nodes",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (a.matrix(), b.matrix());
    let mut changed = 0;
    let mut union = 0;
    for j in 0..a.len() {
        for i in 0..j {
            let (x, y) = (ma[(i, j)] == 1.0, mb[(i, j)] == 1.0);
            if x != y {
                changed += 1;
            }
            if x || y {
                union += 1;
            }
        }
    }
    Ok((changed, union))
}

/// Dump a weight matrix in Matrix Market coordinate format (symmetric, lower
/// triangle, 1-based indices) for inspection with standard tooling.
pub fn write_matrix_market<W: Write>(w: &WeightMatrix, out: &mut W) -> Result<()> {
    let n = w.len();
    let m = w.matrix();
    let mut entries = Vec::new();
    for j in 0..n {
        for i in j..n {
            if m[(i, j)] == 1.0 {
                entries.push((i + 1, j + 1));
            }
        }
    }
    writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(out, "{n} {n} {}", entries.len())?;
    for (i, j) in entries {
        writeln!(out, "{i} {j} 1")?;
    }
    Ok(())
}
