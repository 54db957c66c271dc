//! Matching evaluation: cumulative match curves over repeated random trials,
//! optional graph-based re-ranking, and the experiment driver that ties
//! splitting, training, and scoring together.
//!
//! Protocol per trial: identities are split in half (train/test), the train
//! half is further split into labeled and unlabeled pools by the configured
//! ratio, a projection is fit, and probes from one camera view are matched
//! against a gallery drawn from the remaining views plus any distractor
//! columns. Every random choice is drawn from a seed derived from the master
//! seed and the trial index, so trials are reproducible in isolation and the
//! run is reproducible regardless of scheduling.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::data::{
    projected_sq_dists, split_by_ratio, ExperimentConfig, FeatureSet, MatchingMode, Projection,
    SplitMode, SplitTag,
};
use crate::dense;
use crate::error::{Error, Result};
use crate::learner::{self, IterationRecord, TrainState};
use crate::util::derive_seed;

/// Which learner a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Linear fit with every training sample labeled.
    Fsl,
    /// Linear semi-supervised self-training.
    Ssl,
    /// Multi-kernel fit with every training sample labeled.
    Mkfsl,
    /// Multi-kernel semi-supervised self-training.
    Mkssl,
    /// `mkssl` followed by manifold re-ranking of the gallery.
    MksslMrank,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Fsl,
        Method::Ssl,
        Method::Mkfsl,
        Method::Mkssl,
        Method::MksslMrank,
    ];

    /// Whether the method itself implies the re-ranking pass.
    pub fn reranks(&self) -> bool {
        matches!(self, Method::MksslMrank)
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "fsl" => Ok(Method::Fsl),
            "ssl" => Ok(Method::Ssl),
            "mkfsl" => Ok(Method::Mkfsl),
            "mkssl" => Ok(Method::Mkssl),
            "mkssl-mrank" => Ok(Method::MksslMrank),
            other => Err(Error::Param(format!(
                "unknown method {other:?}; expected fsl, ssl, mkfsl, mkssl, or mkssl-mrank"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fsl => "fsl",
            Method::Ssl => "ssl",
            Method::Mkfsl => "mkfsl",
            Method::Mkssl => "mkssl",
            Method::MksslMrank => "mkssl-mrank",
        })
    }
}

/// Cumulative match curve: `rates[k]` is the fraction of scored probes whose
/// correct match appears within the top `k + 1` gallery entities.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcCurve {
    pub rates: Vec<f64>,
    /// Probes that had a gallery match and were scored.
    pub included: usize,
    /// Probes dropped because no gallery entity shares their identity.
    pub excluded: usize,
}

impl CmcCurve {
    /// Match rate at a 1-based rank, saturating at the curve end.
    pub fn rate_at(&self, rank: usize) -> f64 {
        if rank == 0 || self.rates.is_empty() {
            return 0.0;
        }
        let idx = rank.min(self.rates.len()) - 1;
        self.rates[idx]
    }
}

/// Gallery order for one probe: entity indices sorted by ascending
/// dissimilarity, ties broken by position.
fn ranked_entities(dissim: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dissim.len()).collect();
    order.sort_by(|&a, &b| dissim[a].total_cmp(&dissim[b]).then(a.cmp(&b)));
    order
}

fn curve_from_ranks(ranks: &[usize], depth: usize, excluded: usize) -> Result<CmcCurve> {
    if ranks.is_empty() {
        return Err(Error::Degenerate(
            "no probe has a matching gallery identity".into(),
        ));
    }
    let mut hits = vec![0usize; depth];
    for &r in ranks {
        hits[r - 1] += 1;
    }
    let mut cum = 0usize;
    let rates = hits
        .iter()
        .map(|&h| {
            cum += h;
            cum as f64 / ranks.len() as f64
        })
        .collect();
    Ok(CmcCurve {
        rates,
        included: ranks.len(),
        excluded,
    })
}

/// Image-level curve: every gallery column is its own entity and a probe's
/// rank is that of its best-placed correct image.
pub fn image_cmc(
    dissim: &DMatrix<f64>,
    probe_persons: &[i64],
    gallery_persons: &[Option<i64>],
) -> Result<CmcCurve> {
    let (p, g) = (dissim.nrows(), dissim.ncols());
    if probe_persons.len() != p || gallery_persons.len() != g {
        return Err(Error::Shape(format!(
            "{p} x {g} dissimilarities with {} probe and {} gallery labels",
            probe_persons.len(),
            gallery_persons.len()
        )));
    }
    if g == 0 {
        return Err(Error::Degenerate("gallery is empty".into()));
    }
    let mut ranks = Vec::with_capacity(p);
    let mut excluded = 0usize;
    for (i, &person) in probe_persons.iter().enumerate() {
        if !gallery_persons.contains(&Some(person)) {
            excluded += 1;
            continue;
        }
        let row: Vec<f64> = dissim.row(i).iter().copied().collect();
        let order = ranked_entities(&row);
        let pos = order
            .iter()
            .position(|&j| gallery_persons[j] == Some(person))
            .expect("match existence checked above");
        ranks.push(pos + 1);
    }
    curve_from_ranks(&ranks, g, excluded)
}

/// Person-level curve: gallery images of one identity collapse to a single
/// entity scored by its closest image; distractor images stay individual
/// entities that can only push ranks down.
pub fn person_cmc(
    dissim: &DMatrix<f64>,
    probe_persons: &[i64],
    gallery_persons: &[Option<i64>],
) -> Result<CmcCurve> {
    let (p, g) = (dissim.nrows(), dissim.ncols());
    if probe_persons.len() != p || gallery_persons.len() != g {
        return Err(Error::Shape(format!(
            "{p} x {g} dissimilarities with {} probe and {} gallery labels",
            probe_persons.len(),
            gallery_persons.len()
        )));
    }
    if g == 0 {
        return Err(Error::Degenerate("gallery is empty".into()));
    }
    // Entities in first-appearance order: one per identity, one per
    // distractor image.
    let mut entity_of_col = vec![0usize; g];
    let mut entity_person: Vec<Option<i64>> = Vec::new();
    for (j, person) in gallery_persons.iter().enumerate() {
        let id = match person {
            Some(pid) => entity_person
                .iter()
                .position(|e| *e == Some(*pid))
                .unwrap_or_else(|| {
                    entity_person.push(Some(*pid));
                    entity_person.len() - 1
                }),
            None => {
                entity_person.push(None);
                entity_person.len() - 1
            }
        };
        entity_of_col[j] = id;
    }
    let entities = entity_person.len();
    let mut ranks = Vec::with_capacity(p);
    let mut excluded = 0usize;
    for (i, &person) in probe_persons.iter().enumerate() {
        let target = entity_person.iter().position(|e| *e == Some(person));
        let Some(target) = target else {
            excluded += 1;
            continue;
        };
        let mut best = vec![f64::INFINITY; entities];
        for j in 0..g {
            let e = entity_of_col[j];
            let d = dissim[(i, j)];
            if d < best[e] {
                best[e] = d;
            }
        }
        let order = ranked_entities(&best);
        let pos = order
            .iter()
            .position(|&e| e == target)
            .expect("target entity exists");
        ranks.push(pos + 1);
    }
    curve_from_ranks(&ranks, entities, excluded)
}

/// Graph-smoothed matching scores (higher is better). A kNN graph over the
/// embedded gallery carries similarity from each probe's strong matches to
/// their neighbors: with `S` the symmetrically normalized affinity matrix and
/// `y` a probe's Gaussian affinity to the gallery, the score vector solves
/// `(I - alpha S) f = y`. As `alpha` approaches zero this reduces to ranking
/// by raw distance.
pub fn manifold_rerank(
    z_gallery: &DMatrix<f64>,
    z_probes: &DMatrix<f64>,
    alpha: f64,
    k_graph: usize,
) -> Result<DMatrix<f64>> {
    let g = z_gallery.ncols();
    if z_probes.nrows() != z_gallery.nrows() {
        return Err(Error::Shape(format!(
            "probe embedding dimension {} but gallery {}",
            z_probes.nrows(),
            z_gallery.nrows()
        )));
    }
    if g < 2 {
        return Err(Error::Param(format!(
            "re-ranking needs at least two gallery entries, got {g}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Param(format!(
            "rerank alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if k_graph == 0 || k_graph > g - 1 {
        return Err(Error::Param(format!(
            "rerank k must lie in [1, {}], got {k_graph}",
            g - 1
        )));
    }
    let d_gg = dense::pairwise_sq_dists(z_gallery);
    let mut neighbor_sum = 0.0;
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(g);
    for i in 0..g {
        let mut order: Vec<usize> = (0..g).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| d_gg[(i, a)].total_cmp(&d_gg[(i, b)]).then(a.cmp(&b)));
        order.truncate(k_graph);
        for &j in &order {
            neighbor_sum += d_gg[(i, j)];
        }
        neighbors.push(order);
    }
    let mut bandwidth = neighbor_sum / (g * k_graph) as f64;
    if !(bandwidth > 0.0) {
        // Coincident gallery; fall back to uniform affinities.
        bandwidth = 1.0;
    }

    let mut w = DMatrix::<f64>::zeros(g, g);
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            let a = (-d_gg[(i, j)] / bandwidth).exp();
            w[(i, j)] = a;
            w[(j, i)] = a;
        }
    }
    let degrees: Vec<f64> = (0..g)
        .map(|i| w.row(i).sum().max(1e-12))
        .collect();
    let mut m = DMatrix::<f64>::identity(g, g);
    for i in 0..g {
        for j in 0..g {
            if w[(i, j)] != 0.0 {
                m[(i, j)] -= alpha * w[(i, j)] / (degrees[i] * degrees[j]).sqrt();
            }
        }
    }
    let chol = Cholesky::new(m).ok_or_else(|| {
        Error::Conditioning("re-ranking system is not positive definite".into())
    })?;
    let d_pg = dense::cross_sq_dists(z_probes, z_gallery);
    let y = DMatrix::from_fn(g, z_probes.ncols(), |j, p| {
        (-d_pg[(p, j)] / bandwidth).exp()
    });
    let f = chol.solve(&y);
    Ok(f.transpose())
}

/// One evaluation trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub curve: CmcCurve,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
    pub history: Vec<IterationRecord>,
    pub elapsed: Duration,
}

/// Aggregate over all trials of a run.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub method: Method,
    pub outcomes: Vec<TrialOutcome>,
    /// Trials that errored, with the message; the run continues without them.
    pub failures: Vec<(usize, String)>,
    /// Trial-averaged match rates, indexed by rank - 1.
    pub mean_rates: Vec<f64>,
    pub excluded_total: usize,
}

impl ExperimentReport {
    /// Trial-averaged match rate at a 1-based rank.
    pub fn rank_rate(&self, rank: usize) -> f64 {
        if rank == 0 || self.mean_rates.is_empty() {
            return 0.0;
        }
        let idx = rank.min(self.mean_rates.len()) - 1;
        self.mean_rates[idx]
    }
}

fn mean_curve(outcomes: &[TrialOutcome]) -> Vec<f64> {
    let depth = outcomes
        .iter()
        .map(|o| o.curve.rates.len())
        .max()
        .unwrap_or(0);
    let mut acc = vec![0.0f64; depth];
    for o in outcomes {
        for (k, slot) in acc.iter_mut().enumerate() {
            // Shorter curves saturate at their final value.
            *slot += o.curve.rate_at(k + 1);
        }
    }
    for slot in &mut acc {
        *slot /= outcomes.len() as f64;
    }
    acc
}

/// Fit the method's projection given an explicit labeled/unlabeled column
/// partition of `train`. All methods see the same labeled budget; the
/// supervised ones (`fsl`, `mkfsl`) simply never look at the unlabeled pool.
pub fn fit_with_partition(
    method: Method,
    train: &FeatureSet,
    labeled: &[usize],
    unlabeled: &[usize],
    config: &ExperimentConfig,
) -> Result<(Projection, TrainState)> {
    let labeled_ids: Vec<i64> = labeled
        .iter()
        .map(|&i| {
            train.person_ids()[i]
                .ok_or_else(|| Error::Invariant(format!("labeled column {i} has no person id")))
        })
        .collect::<Result<_>>()?;
    match method {
        Method::Fsl => {
            let x_l = train.features().select_columns(labeled.iter());
            let proj = learner::fit_supervised_linear(&x_l, &labeled_ids, config.subspace_dim)?;
            Ok((
                proj,
                TrainState {
                    iterations: 0,
                    history: Vec::new(),
                    converged: false,
                    warning: None,
                    final_pseudo_graph: None,
                },
            ))
        }
        Method::Ssl => {
            let x = train.features();
            let x_l = x.select_columns(labeled.iter());
            let x_u = x.select_columns(unlabeled.iter());
            let views_u: Vec<u32> = unlabeled.iter().map(|&i| train.view_ids()[i]).collect();
            learner::self_train(&x_l, &labeled_ids, &x_u, &views_u, config)
        }
        Method::Mkssl | Method::MksslMrank => {
            // The kernel bank spans labeled plus unlabeled columns only.
            let mut pool: Vec<usize> = labeled.iter().chain(unlabeled.iter()).copied().collect();
            pool.sort_unstable();
            let sub = train.select(&pool)?;
            let labeled_sub: Vec<usize> = pool
                .iter()
                .enumerate()
                .filter(|(_, orig)| labeled.contains(orig))
                .map(|(pos, _)| pos)
                .collect();
            learner::fit_kernelized(
                sub.features(),
                sub.person_ids(),
                sub.view_ids(),
                &labeled_sub,
                config,
            )
        }
        Method::Mkfsl => {
            let x_l = train.features().select_columns(labeled.iter());
            let views_l: Vec<u32> = labeled.iter().map(|&i| train.view_ids()[i]).collect();
            let ids_l: Vec<Option<i64>> = labeled_ids.iter().map(|&p| Some(p)).collect();
            let all: Vec<usize> = (0..labeled.len()).collect();
            learner::fit_kernelized(&x_l, &ids_l, &views_l, &all, config)
        }
    }
}

/// Fit on a training set whose columns are all tagged as training, with the
/// labeled/unlabeled identity split drawn from `ratio_seed`.
pub fn fit_on_training(
    method: Method,
    train: &FeatureSet,
    config: &ExperimentConfig,
    ratio_seed: u64,
) -> Result<(Projection, TrainState)> {
    let part = split_by_ratio(train, config.ratio, ratio_seed)?;
    fit_with_partition(method, train, &part.labeled, &part.unlabeled, config)
}

struct TestPools {
    probe_cols: Vec<usize>,
    gallery_cols: Vec<usize>,
}

/// Chooses probe and gallery columns for the test identities. Cross-view
/// mode probes from the lowest view id against the other views; the
/// single-gallery mode sends one random image per identity to the gallery
/// and probes with the rest. Distractor columns always join the gallery.
fn select_test_pools(
    fs: &FeatureSet,
    test_cols: &[usize],
    config: &ExperimentConfig,
    gallery_seed: u64,
    probe_seed: u64,
) -> Result<TestPools> {
    let identified: Vec<usize> = test_cols
        .iter()
        .copied()
        .filter(|&i| fs.person_ids()[i].is_some())
        .collect();
    let distractors: Vec<usize> = test_cols
        .iter()
        .copied()
        .filter(|&i| fs.person_ids()[i].is_none())
        .collect();
    if identified.is_empty() {
        return Err(Error::Degenerate("no identified test columns".into()));
    }
    let mut gallery_rng = ChaCha8Rng::seed_from_u64(gallery_seed);
    let mut probe_rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let persons = fs.persons_of(&identified);

    let (mut probe_cols, mut gallery_cols) = match config.split_mode {
        SplitMode::CrossView => {
            let probe_view = identified
                .iter()
                .map(|&i| fs.view_ids()[i])
                .min()
                .expect("identified is nonempty");
            let probe_pool: Vec<usize> = identified
                .iter()
                .copied()
                .filter(|&i| fs.view_ids()[i] == probe_view)
                .collect();
            let gallery_pool: Vec<usize> = identified
                .iter()
                .copied()
                .filter(|&i| fs.view_ids()[i] != probe_view)
                .collect();
            if gallery_pool.is_empty() {
                return Err(Error::Degenerate(
                    "test identities appear in a single view; no cross-view gallery".into(),
                ));
            }
            let probes = pick_per_person(fs, &persons, &probe_pool, &mut probe_rng);
            let gallery = match config.matching_mode {
                MatchingMode::SingleShot => {
                    pick_per_person(fs, &persons, &gallery_pool, &mut gallery_rng)
                }
                MatchingMode::MultiShot => gallery_pool,
            };
            (probes, gallery)
        }
        SplitMode::SingleGalleryPerId => {
            let gallery = pick_per_person(fs, &persons, &identified, &mut gallery_rng);
            let probes: Vec<usize> = identified
                .iter()
                .copied()
                .filter(|i| !gallery.contains(i))
                .collect();
            (probes, gallery)
        }
    };
    if probe_cols.is_empty() {
        return Err(Error::Degenerate("probe pool is empty".into()));
    }
    gallery_cols.extend_from_slice(&distractors);
    probe_cols.sort_unstable();
    Ok(TestPools {
        probe_cols,
        gallery_cols,
    })
}

/// One column per identity (identities visited in sorted order), chosen
/// uniformly from that identity's columns in `pool`. Identities absent from
/// the pool are skipped.
fn pick_per_person(
    fs: &FeatureSet,
    persons: &[i64],
    pool: &[usize],
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut picks = Vec::with_capacity(persons.len());
    for &p in persons {
        let cols: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| fs.person_ids()[i] == Some(p))
            .collect();
        match cols.as_slice() {
            [] => continue,
            [only] => picks.push(*only),
            many => picks.push(*many.choose(rng).expect("nonempty")),
        }
    }
    picks
}

fn run_trial(
    fs: &FeatureSet,
    method: Method,
    config: &ExperimentConfig,
    rerank: bool,
    trial: usize,
) -> Result<TrialOutcome> {
    let started = Instant::now();
    let trial_seed = derive_seed(config.rng_seed, trial as u64);
    let person_seed = derive_seed(trial_seed, 0);
    let ratio_seed = derive_seed(trial_seed, 1);
    let gallery_seed = derive_seed(trial_seed, 2);
    let probe_seed = derive_seed(trial_seed, 3);

    let mut persons = fs.persons();
    if persons.len() < 4 {
        return Err(Error::Domain(format!(
            "repeated-trial evaluation needs at least 4 identities, got {}",
            persons.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(person_seed);
    persons.shuffle(&mut rng);
    let train_persons: std::collections::HashSet<i64> =
        persons[..persons.len() / 2].iter().copied().collect();

    let train_cols: Vec<usize> = (0..fs.len())
        .filter(|&i| matches!(fs.person_ids()[i], Some(p) if train_persons.contains(&p)))
        .collect();
    let test_cols: Vec<usize> = (0..fs.len())
        .filter(|&i| match fs.person_ids()[i] {
            Some(p) => !train_persons.contains(&p),
            None => true,
        })
        .collect();

    let train = fs
        .select(&train_cols)?
        .with_tags(vec![SplitTag::Labeled; train_cols.len()])?;
    let (projection, state) = fit_on_training(method, &train, config, ratio_seed)?;

    let pools = select_test_pools(fs, &test_cols, config, gallery_seed, probe_seed)?;
    let probe_x = fs.features().select_columns(pools.probe_cols.iter());
    let gallery_x = fs.features().select_columns(pools.gallery_cols.iter());
    let probe_persons: Vec<i64> = pools
        .probe_cols
        .iter()
        .map(|&i| fs.person_ids()[i].expect("probes are identified"))
        .collect();
    let gallery_persons: Vec<Option<i64>> = pools
        .gallery_cols
        .iter()
        .map(|&i| fs.person_ids()[i])
        .collect();

    let dissim = if rerank || method.reranks() {
        let z_g = projection.project(&gallery_x)?;
        let z_p = projection.project(&probe_x)?;
        let k_graph = config.rerank_k.min(gallery_x.ncols().saturating_sub(1));
        if k_graph == 0 {
            return Err(Error::Param(
                "re-ranking needs at least two gallery entries".into(),
            ));
        }
        let scores = manifold_rerank(&z_g, &z_p, config.rerank_alpha, k_graph)?;
        scores.map(|s| -s)
    } else {
        projected_sq_dists(&projection, &probe_x, &gallery_x)?
    };

    let curve = match config.matching_mode {
        MatchingMode::SingleShot => image_cmc(&dissim, &probe_persons, &gallery_persons)?,
        MatchingMode::MultiShot => person_cmc(&dissim, &probe_persons, &gallery_persons)?,
    };

    Ok(TrialOutcome {
        trial,
        seed: trial_seed,
        curve,
        iterations: state.iterations,
        converged: state.converged,
        warning: state.warning,
        history: state.history,
        elapsed: started.elapsed(),
    })
}

/// Runs the repeated-trial protocol. Individual trial failures are collected
/// rather than fatal; the run errors only when every trial fails.
pub fn run_experiment(
    fs: &FeatureSet,
    method: Method,
    config: &ExperimentConfig,
    rerank: bool,
) -> Result<ExperimentReport> {
    config.validate()?;
    if fs.is_empty() {
        return Err(Error::Domain("feature set is empty".into()));
    }
    let trials: Vec<usize> = (0..config.trials).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Result<TrialOutcome>> = trials
        .par_iter()
        .map(|&t| run_trial(fs, method, config, rerank, t))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<TrialOutcome>> = trials
        .iter()
        .map(|&t| run_trial(fs, method, config, rerank, t))
        .collect();

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (t, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("trial {t} failed: {e}");
                failures.push((t, e.to_string()));
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    if outcomes.is_empty() {
        return Err(first_error.expect("at least one trial ran"));
    }
    let mean_rates = mean_curve(&outcomes);
    let excluded_total = outcomes.iter().map(|o| o.curve.excluded).sum();
    Ok(ExperimentReport {
        method,
        outcomes,
        failures,
        mean_rates,
        excluded_total,
    })
}

/// Writes the trial-averaged curve as `rank,rate` rows. Output depends only
/// on the curve values, so identical runs produce identical bytes.
pub fn write_cmc_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    write_rates_csv(path, &report.mean_rates)
}

/// Writes one curve's rates as `rank,rate` rows.
pub fn write_curve_csv(path: &Path, curve: &CmcCurve) -> Result<()> {
    write_rates_csv(path, &curve.rates)
}

fn write_rates_csv(path: &Path, rates: &[f64]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "rank,rate")?;
    for (k, rate) in rates.iter().enumerate() {
        writeln!(out, "{},{rate:.6}", k + 1)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes per-trial self-training history as
/// `trial,iteration,edges_changed,objective` rows.
pub fn write_history_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "trial,iteration,edges_changed,objective")?;
    for o in &report.outcomes {
        for rec in &o.history {
            writeln!(
                out,
                "{},{},{},{:.6e}",
                o.trial, rec.iteration, rec.edges_changed, rec.objective
            )?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Human-oriented run summary. Wall-clock timings live here and only here;
/// the CSV artifacts stay byte-reproducible.
pub fn write_summary(path: &Path, report: &ExperimentReport, total: Duration) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "method: {}", report.method)?;
    writeln!(
        out,
        "trials: {} ok, {} failed",
        report.outcomes.len(),
        report.failures.len()
    )?;
    for rank in [1usize, 5, 10, 20] {
        if rank <= report.mean_rates.len() {
            writeln!(out, "rank-{rank}: {:.4}", report.rank_rate(rank))?;
        }
    }
    writeln!(out, "excluded probes: {}", report.excluded_total)?;
    let converged = report.outcomes.iter().filter(|o| o.converged).count();
    let with_loop = report
        .outcomes
        .iter()
        .filter(|o| o.iterations > 0 || o.warning.is_none())
        .count();
    writeln!(out, "converged trials: {converged}/{with_loop}")?;
    for o in &report.outcomes {
        writeln!(
            out,
            "trial {}: seed={} iters={} converged={} rank1={:.4} elapsed={:.1}ms{}",
            o.trial,
            o.seed,
            o.iterations,
            o.converged,
            o.curve.rate_at(1),
            o.elapsed.as_secs_f64() * 1e3,
            o.warning
                .as_deref()
                .map(|w| format!(" warning={w:?}"))
                .unwrap_or_default()
        )?;
    }
    for (t, msg) in &report.failures {
        writeln!(out, "trial {t}: failed: {msg}")?;
    }
    writeln!(out, "total elapsed: {:.1}ms", total.as_secs_f64() * 1e3)?;
    std::fs::write(path, out)?;
    Ok(())
}
