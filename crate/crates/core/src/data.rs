//! Sample collections, label partitions, run configuration, and learned
//! projections.
//!
//! A [`FeatureSet`] stores samples as columns of a dense `d x N` matrix plus
//! per-column metadata: an optional person id (absent for distractors), a
//! camera view id, and a split tag. All learning and evaluation code consumes
//! column selections of one of these.

mod io;
mod synthetic;

pub use io::{
    detect_format, load_feature_set, load_projection, save_feature_set, save_projection,
    FileFormat,
};
pub use synthetic::{generate_synthetic, generate_synthetic_crossview, SyntheticSpec};

use std::fmt;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense;
use crate::error::{Error, Result};
use crate::kernels::KernelKind;

/// Role of a column in the experiment protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Labeled,
    Unlabeled,
    Probe,
    Gallery,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Labeled => "labeled",
            SplitTag::Unlabeled => "unlabeled",
            SplitTag::Probe => "probe",
            SplitTag::Gallery => "gallery",
        }
    }

    pub fn parse(s: &str) -> Option<SplitTag> {
        match s {
            "labeled" => Some(SplitTag::Labeled),
            "unlabeled" => Some(SplitTag::Unlabeled),
            "probe" => Some(SplitTag::Probe),
            "gallery" => Some(SplitTag::Gallery),
            _ => None,
        }
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How probes are matched against the gallery.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchingMode {
    /// Rank individual gallery images.
    SingleShot,
    /// Rank gallery identities by their closest image.
    MultiShot,
}

/// How the test half of a split is divided into probe and gallery sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Probe view vs. the remaining views.
    CrossView,
    /// One random gallery image per identity, all other images probe.
    SingleGalleryPerId,
}

/// A dense feature matrix with per-column metadata. Columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: DMatrix<f64>,
    person_ids: Vec<Option<i64>>,
    view_ids: Vec<u32>,
    split_tags: Vec<SplitTag>,
}

impl FeatureSet {
    pub fn new(
        features: DMatrix<f64>,
        person_ids: Vec<Option<i64>>,
        view_ids: Vec<u32>,
        split_tags: Vec<SplitTag>,
    ) -> Result<Self> {
        let n = features.ncols();
        if features.nrows() == 0 || n == 0 {
            return Err(Error::Shape("feature matrix must be at least 1 x 1".into()));
        }
        if person_ids.len() != n || view_ids.len() != n || split_tags.len() != n {
            return Err(Error::Shape(format!(
                "metadata length mismatch: {} columns but {} ids, {} views, {} tags",
                n,
                person_ids.len(),
                view_ids.len(),
                split_tags.len()
            )));
        }
        for (i, (pid, tag)) in person_ids.iter().zip(split_tags.iter()).enumerate() {
            if *tag == SplitTag::Labeled && pid.is_none() {
                return Err(Error::Invariant(format!(
                    "labeled column {i} has no person id"
                )));
            }
        }
        Ok(FeatureSet {
            features,
            person_ids,
            view_ids,
            split_tags,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty sets
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn person_ids(&self) -> &[Option<i64>] {
        &self.person_ids
    }

    pub fn view_ids(&self) -> &[u32] {
        &self.view_ids
    }

    pub fn split_tags(&self) -> &[SplitTag] {
        &self.split_tags
    }

    /// Columns carrying the given tag, ascending.
    pub fn indices_with_tag(&self, tag: SplitTag) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.split_tags[i] == tag)
            .collect()
    }

    /// New set holding the given columns, metadata included. Order follows
    /// `indices`.
    pub fn select(&self, indices: &[usize]) -> Result<FeatureSet> {
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Shape(format!(
                    "column index {i} out of range for {} columns",
                    self.len()
                )));
            }
        }
        if indices.is_empty() {
            return Err(Error::Shape("cannot select an empty column set".into()));
        }
        let features = self.features.select_columns(indices.iter());
        FeatureSet::new(
            features,
            indices.iter().map(|&i| self.person_ids[i]).collect(),
            indices.iter().map(|&i| self.view_ids[i]).collect(),
            indices.iter().map(|&i| self.split_tags[i]).collect(),
        )
    }

    /// Replace every split tag, keeping data and metadata.
    pub fn with_tags(mut self, tags: Vec<SplitTag>) -> Result<FeatureSet> {
        if tags.len() != self.len() {
            return Err(Error::Shape(format!(
                "tag vector length {} does not match {} columns",
                tags.len(),
                self.len()
            )));
        }
        self.split_tags = tags;
        FeatureSet::new(self.features, self.person_ids, self.view_ids, self.split_tags)
    }

    /// Distinct person ids over the given columns, sorted ascending.
    pub fn persons_of(&self, indices: &[usize]) -> Vec<i64> {
        let mut ids: Vec<i64> = indices
            .iter()
            .filter_map(|&i| self.person_ids[i])
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Distinct person ids over all columns, sorted ascending.
    pub fn persons(&self) -> Vec<i64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.persons_of(&all)
    }
}

/// An exact labeled fraction, e.g. `1/3`. Kept as a reduced fraction so
/// person counts are computed in integer arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Ratio> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::Param(format!(
                "labeled ratio must lie in (0, 1], got {num}/{den}"
            )));
        }
        let g = gcd(num, den);
        Ok(Ratio {
            num: num / g,
            den: den / g,
        })
    }

    /// Accepts `p/q`, a plain integer (must be 1), or a decimal like `0.25`.
    pub fn parse(s: &str) -> Result<Ratio> {
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let num: u64 = a.trim().parse().map_err(|_| bad_ratio(s))?;
            let den: u64 = b.trim().parse().map_err(|_| bad_ratio(s))?;
            return Ratio::new(num, den);
        }
        if let Some((int, frac)) = s.split_once('.') {
            let int: u64 = if int.is_empty() {
                0
            } else {
                int.parse().map_err(|_| bad_ratio(s))?
            };
            if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad_ratio(s));
            }
            let den = 10u64.pow(frac.len() as u32);
            let num = int * den + frac.parse::<u64>().map_err(|_| bad_ratio(s))?;
            return Ratio::new(num, den);
        }
        let num: u64 = s.parse().map_err(|_| bad_ratio(s))?;
        Ratio::new(num, 1)
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `floor(self * count)` in exact integer arithmetic.
    pub fn scaled_floor(&self, count: usize) -> usize {
        ((count as u64 * self.num) / self.den) as usize
    }

    pub fn is_one(&self) -> bool {
        self.num == self.den
    }
}

fn bad_ratio(s: &str) -> Error {
    Error::Param(format!("cannot parse ratio from {s:?}"))
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Index partition of training columns into labeled and unlabeled pools.
#[derive(Debug, Clone)]
pub struct LabeledPartition {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub ratio: Ratio,
}

/// Split training columns by identity: `floor(ratio * persons)` persons (at
/// least one) keep their labels, every image of the rest becomes unlabeled.
/// Columns tagged probe/gallery are ignored. The person shuffle is drawn from
/// `seed` alone.
pub fn split_by_ratio(fs: &FeatureSet, ratio: Ratio, seed: u64) -> Result<LabeledPartition> {
    let train: Vec<usize> = (0..fs.len())
        .filter(|&i| matches!(fs.split_tags()[i], SplitTag::Labeled | SplitTag::Unlabeled))
        .collect();
    if train.is_empty() {
        return Err(Error::Domain("no training columns to split".into()));
    }
    for &i in &train {
        if fs.person_ids()[i].is_none() {
            return Err(Error::Domain(format!(
                "training column {i} has no person id; cannot split by identity"
            )));
        }
    }
    let mut persons = fs.persons_of(&train);
    if persons.len() < 2 {
        return Err(Error::Domain(
            "need at least two identities to form a labeled split".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    persons.shuffle(&mut rng);
    let keep = ratio.scaled_floor(persons.len()).max(1);
    let labeled_persons: std::collections::HashSet<i64> =
        persons.iter().take(keep).copied().collect();
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for &i in &train {
        if labeled_persons.contains(&fs.person_ids()[i].unwrap()) {
            labeled.push(i);
        } else {
            unlabeled.push(i);
        }
    }
    Ok(LabeledPartition {
        labeled,
        unlabeled,
        ratio,
    })
}

/// All knobs of a training/evaluation run. `Default` reproduces the standard
/// settings: eta 1, k 2, ten self-training rounds, theta 0.01, and an
/// 11-kernel bandwidth grid c in {2.0, 2.1, ..., 3.0}.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub eta: f64,
    pub k_neighbors: usize,
    pub max_iters: usize,
    pub theta: f64,
    pub c_grid: Vec<f64>,
    pub ratio: Ratio,
    pub trials: usize,
    pub rng_seed: u64,
    pub stop_tolerance: f64,
    pub subspace_dim: Option<usize>,
    pub rerank_alpha: f64,
    pub rerank_k: usize,
    pub split_mode: SplitMode,
    pub matching_mode: MatchingMode,
    pub cache_dir: Option<PathBuf>,
}

pub fn default_c_grid() -> Vec<f64> {
    (0..=10).map(|i| 2.0 + 0.1 * i as f64).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            eta: 1.0,
            k_neighbors: 2,
            max_iters: 10,
            theta: 0.01,
            c_grid: default_c_grid(),
            ratio: Ratio::new(1, 3).unwrap(),
            trials: 10,
            rng_seed: 42,
            stop_tolerance: 0.0,
            subspace_dim: None,
            rerank_alpha: 0.95,
            rerank_k: 10,
            split_mode: SplitMode::CrossView,
            matching_mode: MatchingMode::SingleShot,
            cache_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::Param(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.theta > 0.0) || !self.theta.is_finite() {
            return Err(Error::Param(format!(
                "theta must be positive, got {}",
                self.theta
            )));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Param("k_neighbors must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Param("max_iters must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Param("trials must be at least 1".into()));
        }
        if self.c_grid.is_empty() {
            return Err(Error::Param("c_grid must contain at least one bandwidth".into()));
        }
        for &c in &self.c_grid {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::Param(format!("kernel bandwidth factors must be positive, got {c}")));
            }
        }
        if !(self.stop_tolerance >= 0.0 && self.stop_tolerance < 1.0) {
            return Err(Error::Param(format!(
                "stop_tolerance must lie in [0, 1), got {}",
                self.stop_tolerance
            )));
        }
        if !(self.rerank_alpha > 0.0 && self.rerank_alpha < 1.0) {
            return Err(Error::Param(format!(
                "rerank_alpha must lie in (0, 1), got {}",
                self.rerank_alpha
            )));
        }
        if self.rerank_k == 0 {
            return Err(Error::Param("rerank_k must be at least 1".into()));
        }
        if self.subspace_dim == Some(0) {
            return Err(Error::Param("subspace_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// A learned embedding. Linear projections map raw features directly;
/// kernelized ones carry the training context needed to embed new samples
/// (training columns, kernel kinds, fusion weights, and the shared bandwidth
/// scale mu).
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Linear {
        /// `d x r`, columns are the generalized eigenvectors.
        basis: DMatrix<f64>,
    },
    Kernelized {
        /// `(n + u) x r` coefficients over the training samples.
        coefficients: DMatrix<f64>,
        /// Training samples the kernel columns are evaluated against.
        train_features: DMatrix<f64>,
        kinds: Vec<KernelKind>,
        beta: DVector<f64>,
        mu: f64,
    },
}

impl Projection {
    pub fn subspace_dim(&self) -> usize {
        match self {
            Projection::Linear { basis } => basis.ncols(),
            Projection::Kernelized { coefficients, .. } => coefficients.ncols(),
        }
    }

    /// Feature dimension this projection accepts.
    pub fn input_dim(&self) -> usize {
        match self {
            Projection::Linear { basis } => basis.nrows(),
            Projection::Kernelized { train_features, .. } => train_features.nrows(),
        }
    }

    /// Embed samples (columns of `x`) into the learned subspace; the result
    /// is `r x N`.
    pub fn project(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Shape(format!(
                "projection expects {}-dimensional samples, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        match self {
            Projection::Linear { basis } => Ok(basis.transpose() * x),
            Projection::Kernelized {
                coefficients,
                train_features,
                kinds,
                beta,
                mu,
            } => {
                let fused = crate::kernels::fused_cross_kernel(train_features, x, kinds, beta, *mu)?;
                Ok(coefficients.transpose() * fused)
            }
        }
    }
}

/// Squared distances between two projected sets: entry `(i, j)` is the
/// squared Euclidean distance between embedded probe `i` and gallery `j`.
pub fn projected_sq_dists(
    projection: &Projection,
    probes: &DMatrix<f64>,
    gallery: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let zp = projection.project(probes)?;
    let zg = projection.project(gallery)?;
    Ok(dense::cross_sq_dists(&zp, &zg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_set() -> FeatureSet {
        let x = DMatrix::from_fn(3, 6, |i, j| (i * 6 + j) as f64);
        FeatureSet::new(
            x,
            vec![Some(1), Some(1), Some(2), Some(2), None, Some(3)],
            vec![0, 1, 0, 1, 0, 1],
            vec![
                SplitTag::Labeled,
                SplitTag::Labeled,
                SplitTag::Labeled,
                SplitTag::Labeled,
                SplitTag::Gallery,
                SplitTag::Unlabeled,
            ],
        )
        .unwrap()
    }

    #[test]
    fn labeled_columns_require_person_ids() {
        let x = DMatrix::from_element(2, 2, 1.0);
        let err = FeatureSet::new(
            x,
            vec![Some(1), None],
            vec![0, 1],
            vec![SplitTag::Labeled, SplitTag::Labeled],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Invariant(_)));
    }

    #[test]
    fn select_preserves_metadata_order() {
        let fs = small_set();
        let sub = fs.select(&[3, 0]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.person_ids(), &[Some(2), Some(1)]);
        assert_eq!(sub.view_ids(), &[1, 0]);
        assert_eq!(sub.features()[(0, 0)], 3.0);
        assert_eq!(sub.features()[(0, 1)], 0.0);
    }

    #[test]
    fn ratio_parsing_and_floor() {
        assert_eq!(Ratio::parse("1/3").unwrap(), Ratio::new(1, 3).unwrap());
        assert_eq!(Ratio::parse("0.25").unwrap(), Ratio::new(1, 4).unwrap());
        assert_eq!(Ratio::parse("1").unwrap(), Ratio::new(1, 1).unwrap());
        assert_eq!(Ratio::parse("2/6").unwrap().to_string(), "1/3");
        assert!(Ratio::parse("0").is_err());
        assert!(Ratio::parse("5/3").is_err());
        assert!(Ratio::parse("x").is_err());
        let third = Ratio::new(1, 3).unwrap();
        assert_eq!(third.scaled_floor(316), 105);
        assert_eq!(Ratio::new(1, 7).unwrap().scaled_floor(50), 7);
        assert_eq!(Ratio::new(1, 1).unwrap().scaled_floor(50), 50);
    }

    #[test]
    fn split_by_ratio_partitions_by_person() {
        let fs = small_set();
        let part = split_by_ratio(&fs, Ratio::new(1, 3).unwrap(), 7).unwrap();
        // 3 training persons (1, 2, 3), floor(3/3) = 1 labeled person.
        let labeled_persons = fs.persons_of(&part.labeled);
        assert_eq!(labeled_persons.len(), 1);
        // Disjoint and exhaustive over training columns (5 of them).
        assert_eq!(part.labeled.len() + part.unlabeled.len(), 5);
        for i in &part.labeled {
            assert!(!part.unlabeled.contains(i));
        }
        // Deterministic under the same seed.
        let again = split_by_ratio(&fs, Ratio::new(1, 3).unwrap(), 7).unwrap();
        assert_eq!(again.labeled, part.labeled);
    }

    #[test]
    fn split_always_keeps_at_least_one_person() {
        let fs = small_set();
        let part = split_by_ratio(&fs, Ratio::new(1, 100).unwrap(), 3).unwrap();
        assert!(!part.labeled.is_empty());
    }

    #[test]
    fn config_validation_catches_bad_params() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.eta = 0.0;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.stop_tolerance = 1.0;
        assert!(cfg.validate().is_err());
        cfg = ExperimentConfig::default();
        cfg.c_grid.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_c_grid_matches_standard_settings() {
        let g = default_c_grid();
        assert_eq!(g.len(), 11);
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!((g[10] - 3.0).abs() < 1e-12);
        assert!((g[1] - 2.1).abs() < 1e-12);
    }

    #[test]
    fn linear_projection_with_identity_is_passthrough() {
        let basis = DMatrix::<f64>::identity(3, 3);
        let p = Projection::Linear { basis };
        let x = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        let z = p.project(&x).unwrap();
        assert_eq!(z, x);
        let d = projected_sq_dists(&p, &x, &x).unwrap();
        let direct = crate::dense::pairwise_sq_dists(&x);
        assert!((d - direct).norm() < 1e-12);
    }
}
