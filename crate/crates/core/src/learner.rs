//! Projection learning.
//!
//! The supervised objective pulls same-person samples together in the
//! projected space; the semi-supervised one adds a pseudo graph over
//! unlabeled samples weighted by `eta`. Minimizers are the smallest
//! generalized eigenvectors of `(X L X^T, X D X^T)` pencils (or their kernel
//! analogues), and self-training alternates between solving the pencil and
//! rebuilding the pseudo graph in the current embedding until the graph stops
//! changing.

use nalgebra::DMatrix;

use crate::data::{ExperimentConfig, Projection};
use crate::dense;
use crate::eigen::GeneralizedEigenProblem;
use crate::error::{Error, Result};
use crate::graph::{
    edge_difference, knn_cross_view_weights, label_weights, laplacian, GraphRole, WeightMatrix,
};
use crate::kernels::{self, KernelBank, KernelKind};

/// One self-training round: how many undirected pseudo edges flipped relative
/// to the previous round, and the objective after refitting.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub edges_changed: usize,
    pub objective: f64,
}

/// Outcome of a self-training run.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Number of completed rounds (length of `history`).
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// True when the loop exited because the pseudo graph stabilized rather
    /// than by exhausting the iteration budget.
    pub converged: bool,
    /// Set when self-training was skipped or abandoned and the supervised
    /// solution was returned instead.
    pub warning: Option<String>,
    pub final_pseudo_graph: Option<WeightMatrix>,
}

impl TrainState {
    fn empty() -> Self {
        TrainState {
            iterations: 0,
            history: Vec::new(),
            converged: false,
            warning: None,
            final_pseudo_graph: None,
        }
    }

    fn skipped(reason: String) -> Self {
        TrainState {
            warning: Some(reason),
            ..TrainState::empty()
        }
    }
}

/// Value of the training objective at a given projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub labeled: f64,
    pub unlabeled: f64,
    pub eta: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.labeled + self.eta * self.unlabeled
    }
}

/// `tr(P^T M P)` evaluated without forming `P^T M P`.
fn quadratic_trace(m: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    dense::frob_inner(&(m * p), p)
}

/// Graph-smoothness objective of a linear projection `u`: the labeled term
/// `tr(U^T X_l L^l X_l^T U)` plus `eta` times its pseudo-graph analogue.
/// `x_u` and `w_u` must be supplied together.
pub fn objective(
    x_l: &DMatrix<f64>,
    x_u: Option<&DMatrix<f64>>,
    u: &DMatrix<f64>,
    w_l: &WeightMatrix,
    w_u: Option<&WeightMatrix>,
    eta: f64,
) -> Result<ObjectiveTerms> {
    if w_l.len() != x_l.ncols() {
        return Err(Error::Shape(format!(
            "label graph on {} nodes for {} labeled samples",
            w_l.len(),
            x_l.ncols()
        )));
    }
    let lap_l = laplacian(w_l);
    let labeled = quadratic_trace(&(x_l * &lap_l.laplacian * x_l.transpose()), u);
    let unlabeled = match (x_u, w_u) {
        (Some(x_u), Some(w_u)) => {
            if w_u.len() != x_u.ncols() {
                return Err(Error::Shape(format!(
                    "pseudo graph on {} nodes for {} unlabeled samples",
                    w_u.len(),
                    x_u.ncols()
                )));
            }
            let lap_u = laplacian(w_u);
            quadratic_trace(&(x_u * &lap_u.laplacian * x_u.transpose()), u)
        }
        (None, None) => 0.0,
        _ => {
            return Err(Error::Param(
                "unlabeled samples and pseudo graph must be provided together".into(),
            ))
        }
    };
    Ok(ObjectiveTerms {
        labeled,
        unlabeled,
        eta,
    })
}

fn distinct_person_count(person_ids: &[i64]) -> usize {
    let mut ids = person_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.len()
}

fn resolve_subspace_dim(person_ids: &[i64], requested: Option<usize>) -> Result<usize> {
    let persons = distinct_person_count(person_ids);
    if persons < 2 {
        return Err(Error::Domain(format!(
            "need at least two labeled persons, got {persons}"
        )));
    }
    let r = requested.unwrap_or(persons - 1);
    if r == 0 {
        return Err(Error::Param("subspace dimension must be at least 1".into()));
    }
    Ok(r)
}

/// Laplacian-weighted scatter pair `(X L X^T, X D X^T)` of one graph.
fn scatter_pair(x: &DMatrix<f64>, w: &WeightMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    let lap = laplacian(w);
    let a = x * &lap.laplacian * x.transpose();
    // X D X^T via column scaling by degrees.
    let mut xd = x.clone();
    for (j, mut col) in xd.column_iter_mut().enumerate() {
        col *= lap.degrees[j];
    }
    let b = xd * x.transpose();
    (a, b)
}

/// Supervised linear embedding from labeled samples only. The subspace
/// dimension defaults to (distinct persons - 1).
pub fn fit_supervised_linear(
    x_l: &DMatrix<f64>,
    person_ids: &[i64],
    subspace_dim: Option<usize>,
) -> Result<Projection> {
    if person_ids.len() != x_l.ncols() {
        return Err(Error::Shape(format!(
            "{} person ids for {} samples",
            person_ids.len(),
            x_l.ncols()
        )));
    }
    let r = resolve_subspace_dim(person_ids, subspace_dim)?;
    let w_l = label_weights(person_ids);
    let (a, b) = scatter_pair(x_l, &w_l);
    let sol = GeneralizedEigenProblem::new(a, b, 0.0)?.smallest_eigenvectors(r)?;
    Ok(Projection::Linear {
        basis: sol.eigenvectors,
    })
}

/// Semi-supervised linear embedding with a fixed pseudo graph.
pub fn fit_semi_supervised_linear(
    x_l: &DMatrix<f64>,
    person_ids: &[i64],
    x_u: &DMatrix<f64>,
    w_u: &WeightMatrix,
    eta: f64,
    subspace_dim: Option<usize>,
) -> Result<Projection> {
    if person_ids.len() != x_l.ncols() {
        return Err(Error::Shape(format!(
            "{} person ids for {} samples",
            person_ids.len(),
            x_l.ncols()
        )));
    }
    if x_u.nrows() != x_l.nrows() {
        return Err(Error::Shape(format!(
            "labeled dimension {} but unlabeled dimension {}",
            x_l.nrows(),
            x_u.nrows()
        )));
    }
    if w_u.len() != x_u.ncols() {
        return Err(Error::Shape(format!(
            "pseudo graph on {} nodes for {} unlabeled samples",
            w_u.len(),
            x_u.ncols()
        )));
    }
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::Param(format!("eta must be nonnegative, got {eta}")));
    }
    let r = resolve_subspace_dim(person_ids, subspace_dim)?;
    let w_l = label_weights(person_ids);
    let (a_l, b_l) = scatter_pair(x_l, &w_l);
    let (a_u, b_u) = scatter_pair(x_u, w_u);
    let a = a_l + a_u * eta;
    let b = b_l + b_u * eta;
    let sol = GeneralizedEigenProblem::new(a, b, 0.0)?.smallest_eigenvectors(r)?;
    Ok(Projection::Linear {
        basis: sol.eigenvectors,
    })
}

/// Drives the alternating graph-rebuild / refit loop. Iteration 1 builds the
/// graph from `first_embedding` (the unlabeled pool under the supervised
/// initial model); later iterations embed it through `project_unlabeled`
/// applied to the latest refit model. `refit` solves the pencil for a fixed
/// pseudo graph, returning the new model and its objective value. Returns
/// `None` for the model when no refit ever ran, in which case the caller
/// falls back to its supervised solution.
fn run_self_training(
    first_embedding: DMatrix<f64>,
    unlabeled_views: &[u32],
    config: &ExperimentConfig,
    project_unlabeled: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    mut refit: impl FnMut(&WeightMatrix) -> Result<(DMatrix<f64>, f64)>,
) -> Result<(Option<DMatrix<f64>>, TrainState)> {
    let u = unlabeled_views.len();
    if u == 0 {
        return Ok((None, TrainState::empty()));
    }
    if u < config.k_neighbors + 1 {
        let reason = format!(
            "{u} unlabeled samples cannot support k = {}; self-training skipped",
            config.k_neighbors
        );
        log::warn!("{reason}");
        return Ok((None, TrainState::skipped(reason)));
    }

    let mut first = Some(first_embedding);
    let mut model: Option<DMatrix<f64>> = None;
    let mut state = TrainState::empty();
    let mut w_prev = WeightMatrix::empty(u, GraphRole::Pseudo);
    let mut last_objective = f64::NAN;

    for t in 1..=config.max_iters {
        let z_u = match &model {
            Some(m) => project_unlabeled(m),
            None => first.take().expect("first embedding consumed once"),
        };
        let step = knn_cross_view_weights(&z_u, unlabeled_views, config.k_neighbors)
            .and_then(|w_t| {
                let (changed, union) = edge_difference(&w_prev, &w_t)?;
                Ok((w_t, changed, union))
            });
        let (w_t, changed, union) = match step {
            Ok(v) => v,
            Err(e) if t == 1 => {
                let reason = format!("self-training abandoned at iteration 1: {e}");
                log::warn!("{reason}");
                state.warning = Some(reason);
                return Ok((None, state));
            }
            Err(e) => return Err(e),
        };
        let change_fraction = if union == 0 {
            0.0
        } else {
            changed as f64 / union as f64
        };
        if t > 1 && change_fraction <= config.stop_tolerance {
            // Graph is (sufficiently) stable; the previous model already
            // solves this pencil, so no refit is needed.
            log::info!("iter={t} edges_changed={changed} objective={last_objective}");
            state.history.push(IterationRecord {
                iteration: t,
                edges_changed: changed,
                objective: last_objective,
            });
            state.converged = true;
            w_prev = w_t;
            break;
        }
        let refit_result = refit(&w_t);
        let (next, obj) = match refit_result {
            Ok(v) => v,
            Err(e) if t == 1 => {
                let reason = format!("self-training abandoned at iteration 1: {e}");
                log::warn!("{reason}");
                state.warning = Some(reason);
                return Ok((None, state));
            }
            Err(e) => return Err(e),
        };
        log::info!("iter={t} edges_changed={changed} objective={obj}");
        state.history.push(IterationRecord {
            iteration: t,
            edges_changed: changed,
            objective: obj,
        });
        model = Some(next);
        last_objective = obj;
        w_prev = w_t;
    }
    state.iterations = state.history.len();
    state.final_pseudo_graph = Some(w_prev);
    Ok((model, state))
}

/// Linear self-training: start from the supervised solution, then alternate
/// between rebuilding the cross-view pseudo graph in the current embedding
/// and refitting the joint pencil.
pub fn self_train(
    x_l: &DMatrix<f64>,
    person_ids: &[i64],
    x_u: &DMatrix<f64>,
    unlabeled_views: &[u32],
    config: &ExperimentConfig,
) -> Result<(Projection, TrainState)> {
    config.validate()?;
    if unlabeled_views.len() != x_u.ncols() {
        return Err(Error::Shape(format!(
            "{} view ids for {} unlabeled samples",
            unlabeled_views.len(),
            x_u.ncols()
        )));
    }
    let init = match fit_supervised_linear(x_l, person_ids, config.subspace_dim)? {
        Projection::Linear { basis } => basis,
        _ => unreachable!(),
    };
    let w_l = label_weights(person_ids);
    let (refit_basis, state) = run_self_training(
        init.transpose() * x_u,
        unlabeled_views,
        config,
        |basis| basis.transpose() * x_u,
        |w_u| {
            let proj = fit_semi_supervised_linear(
                x_l,
                person_ids,
                x_u,
                w_u,
                config.eta,
                config.subspace_dim,
            )?;
            let basis = match proj {
                Projection::Linear { basis } => basis,
                _ => unreachable!(),
            };
            let terms = objective(x_l, Some(x_u), &basis, &w_l, Some(w_u), config.eta)?;
            Ok((basis, terms.total()))
        },
    )?;
    let basis = refit_basis.unwrap_or(init);
    Ok((Projection::Linear { basis }, state))
}

/// Kernelized learner over the full training pool (labeled + unlabeled) with
/// the default Gaussian bank from `config.c_grid`.
pub fn fit_kernelized(
    x: &DMatrix<f64>,
    person_ids: &[Option<i64>],
    view_ids: &[u32],
    labeled: &[usize],
    config: &ExperimentConfig,
) -> Result<(Projection, TrainState)> {
    let kinds: Vec<KernelKind> = config
        .c_grid
        .iter()
        .map(|&c| KernelKind::Gaussian { c })
        .collect();
    fit_kernelized_custom(x, person_ids, view_ids, labeled, config, &kinds)
}

/// Kernelized learner with an explicit kernel family list. A single `Linear`
/// member reproduces the linear path in kernel coordinates.
pub fn fit_kernelized_custom(
    x: &DMatrix<f64>,
    person_ids: &[Option<i64>],
    view_ids: &[u32],
    labeled: &[usize],
    config: &ExperimentConfig,
    kinds: &[KernelKind],
) -> Result<(Projection, TrainState)> {
    config.validate()?;
    let total = x.ncols();
    if person_ids.len() != total || view_ids.len() != total {
        return Err(Error::Shape(format!(
            "{} samples but {} person ids and {} view ids",
            total,
            person_ids.len(),
            view_ids.len()
        )));
    }
    let mut is_labeled = vec![false; total];
    for &i in labeled {
        if i >= total {
            return Err(Error::Shape(format!("labeled index {i} out of range")));
        }
        if is_labeled[i] {
            return Err(Error::Shape(format!("labeled index {i} repeated")));
        }
        is_labeled[i] = true;
    }
    let ids_l: Vec<i64> = labeled
        .iter()
        .map(|&i| {
            person_ids[i].ok_or_else(|| {
                Error::Invariant(format!("labeled sample {i} has no person id"))
            })
        })
        .collect::<Result<_>>()?;
    let unlabeled: Vec<usize> = (0..total).filter(|&i| !is_labeled[i]).collect();
    let r = resolve_subspace_dim(&ids_l, config.subspace_dim)?;

    let all_gaussian = kinds.iter().all(|k| matches!(k, KernelKind::Gaussian { .. }));
    let bank = match (&config.cache_dir, all_gaussian) {
        (Some(dir), true) => {
            let grid: Vec<f64> = kinds
                .iter()
                .map(|k| match k {
                    KernelKind::Gaussian { c } => *c,
                    KernelKind::Linear => unreachable!(),
                })
                .collect();
            kernels::build_bank_with_cache(x, &grid, dir)?
        }
        _ => build_custom_bank(x, kinds)?,
    };
    let ideal = kernels::ideal_kernel(&ids_l);
    let beta = kernels::kernel_weights(&bank, &ideal, labeled)?;
    let fused = kernels::fuse(&bank, &beta, labeled, &unlabeled)?;

    let k_l = fused.k_labeled();
    let w_l = label_weights(&ids_l);
    let (a_l, b_l) = scatter_pair(&k_l, &w_l);

    if unlabeled.is_empty() {
        // Fully-supervised fit: every training sample is a kernel center.
        let coefficients = GeneralizedEigenProblem::new(a_l, b_l, config.theta)?
            .smallest_eigenvectors(r)?
            .eigenvectors;
        return Ok((
            Projection::Kernelized {
                coefficients,
                train_features: x.clone(),
                kinds: bank.kinds().to_vec(),
                beta,
                mu: bank.mu(),
            },
            TrainState::empty(),
        ));
    }

    // The initial model is the fully-supervised fit on the labeled subset
    // alone (its own bank, labeled centers); only the refits expand over the
    // whole pool.
    let x_l = x.select_columns(labeled.iter());
    let ids_sub: Vec<Option<i64>> = ids_l.iter().map(|&p| Some(p)).collect();
    let views_sub: Vec<u32> = labeled.iter().map(|&i| view_ids[i]).collect();
    let all_sub: Vec<usize> = (0..labeled.len()).collect();
    let (init, _) = fit_kernelized_custom(&x_l, &ids_sub, &views_sub, &all_sub, config, kinds)?;

    let views_u: Vec<u32> = unlabeled.iter().map(|&i| view_ids[i]).collect();
    let x_u = x.select_columns(unlabeled.iter());
    let k_u = fused.k_unlabeled();
    let (refit_coefficients, state) = run_self_training(
        init.project(&x_u)?,
        &views_u,
        config,
        |p| p.transpose() * &k_u,
        |w_u| {
            let (a_u, b_u) = scatter_pair(&k_u, w_u);
            let a = &a_l + &a_u * config.eta;
            let b = &b_l + &b_u * config.eta;
            let p = GeneralizedEigenProblem::new(a, b, config.theta)?
                .smallest_eigenvectors(r)?
                .eigenvectors;
            let obj = quadratic_trace(&a_l, &p) + config.eta * quadratic_trace(&a_u, &p);
            Ok((p, obj))
        },
    )?;

    match refit_coefficients {
        Some(coefficients) => Ok((
            Projection::Kernelized {
                coefficients,
                train_features: x.clone(),
                kinds: bank.kinds().to_vec(),
                beta,
                mu: bank.mu(),
            },
            state,
        )),
        None => Ok((init, state)),
    }
}

/// Bank construction for an explicit kind list; Gaussian members share one
/// distance matrix and `mu`, linear members are plain Gram matrices.
pub fn build_custom_bank(x: &DMatrix<f64>, kinds: &[KernelKind]) -> Result<KernelBank> {
    if kinds.is_empty() {
        return Err(Error::Param("kernel kind list is empty".into()));
    }
    let any_gaussian = kinds.iter().any(|k| matches!(k, KernelKind::Gaussian { .. }));
    if !any_gaussian {
        let matrices: Vec<DMatrix<f64>> = kinds.iter().map(|_| x.transpose() * x).collect();
        return KernelBank::from_members(kinds.to_vec(), matrices, 0.0);
    }
    if kinds
        .iter()
        .all(|k| matches!(k, KernelKind::Gaussian { .. }))
    {
        let grid: Vec<f64> = kinds
            .iter()
            .map(|k| match k {
                KernelKind::Gaussian { c } => *c,
                KernelKind::Linear => unreachable!(),
            })
            .collect();
        return kernels::build_bank(x, &grid);
    }
    let dists = dense::pairwise_sq_dists(x);
    let mu = kernels::mean_sq_dist(&dists);
    if mu == 0.0 {
        return Err(Error::Degenerate(
            "all samples coincide; mean squared distance is zero".into(),
        ));
    }
    let matrices: Vec<DMatrix<f64>> = kinds
        .iter()
        .map(|kind| match kind {
            KernelKind::Gaussian { c } => dists.map(|d| (-d / (c * mu)).exp()),
            KernelKind::Linear => x.transpose() * x,
        })
        .collect();
    KernelBank::from_members(kinds.to_vec(), matrices, mu)
}
