//! Synthetic two-view identity data.
//!
//! Each person is a latent Gaussian vector; each camera view observes it
//! through its own fixed linear map plus isotropic noise. The view maps share
//! a common base distorted per view by `view_shift`, so views disagree enough
//! that cross-view matching has actual work to do while nearby samples still
//! tend to share an identity, which is the regime graph-regularized learning
//! assumes.
//!
//! With `person_clusters > 0` the latents are drawn around shared cluster
//! centers, so some persons look alike. That mirrors real galleries, where a
//! mismatched neighbor is usually a similar-looking person rather than a
//! uniformly random one.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::{FeatureSet, SplitTag};

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub persons: usize,
    pub images_per_view: usize,
    pub latent_dim: usize,
    /// Observed dimension; defaults to `3 * latent_dim`.
    pub feature_dim: Option<usize>,
    pub noise_sigma: f64,
    /// Relative strength of the per-view map distortion; must be positive so
    /// the two views never coincide.
    pub view_shift: f64,
    /// Number of look-alike groups the persons fall into; 0 means every
    /// latent is drawn independently.
    pub person_clusters: usize,
    /// Within-group spread in (0, 1]; smaller values pull group members
    /// closer together. Ignored when `person_clusters` is 0. The mix keeps
    /// the marginal latent variance at 1 regardless of the spread.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            persons: 100,
            images_per_view: 1,
            latent_dim: 8,
            feature_dim: None,
            noise_sigma: 0.3,
            view_shift: 1.0,
            person_clusters: 0,
            cluster_spread: 0.5,
            seed: 0,
        }
    }
}

/// Convenience wrapper over [`generate_synthetic`] with the default observed
/// dimension and view shift.
pub fn generate_synthetic_crossview(
    persons: usize,
    images_per_view: usize,
    latent_dim: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<FeatureSet> {
    generate_synthetic(&SyntheticSpec {
        persons,
        images_per_view,
        latent_dim,
        noise_sigma,
        seed,
        ..Default::default()
    })
}

/// Draw the dataset described by `spec`. Columns are ordered person-major:
/// for each person, all images of view 0 then all images of view 1. Every
/// column is tagged labeled; downstream splitting re-tags as needed. The same
/// seed always yields the same bytes.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FeatureSet> {
    if spec.persons < 2 {
        return Err(Error::Param("need at least 2 persons".into()));
    }
    if spec.images_per_view == 0 {
        return Err(Error::Param("images_per_view must be at least 1".into()));
    }
    if spec.latent_dim == 0 {
        return Err(Error::Param("latent_dim must be at least 1".into()));
    }
    if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
        return Err(Error::Param(format!(
            "noise_sigma must be a nonnegative finite value, got {}",
            spec.noise_sigma
        )));
    }
    if !(spec.view_shift > 0.0) || !spec.view_shift.is_finite() {
        return Err(Error::Param(format!(
            "view_shift must be a positive finite value, got {}",
            spec.view_shift
        )));
    }
    if !(spec.cluster_spread > 0.0 && spec.cluster_spread <= 1.0) {
        return Err(Error::Param(format!(
            "cluster_spread must be in (0, 1], got {}",
            spec.cluster_spread
        )));
    }
    let d = spec.feature_dim.unwrap_or(3 * spec.latent_dim);
    if d == 0 {
        return Err(Error::Param("feature_dim must be at least 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = spec.latent_dim;
    let scale = 1.0 / (q as f64).sqrt();
    // Base map first, then per-view distortions, then cluster centers (only
    // when enabled), then per-person latents, then noise in column order; the
    // draw order is part of the format and must stay fixed. Each map is
    // (base + shift * distortion) normalized so feature scale does not depend
    // on the shift.
    let base = DMatrix::from_fn(d, q, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
    let norm = 1.0 / (1.0 + spec.view_shift * spec.view_shift).sqrt();
    let view_maps: Vec<DMatrix<f64>> = (0..2)
        .map(|_| {
            let distortion =
                DMatrix::from_fn(d, q, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
            (&base + distortion * spec.view_shift) * norm
        })
        .collect();
    let centers: Vec<DMatrix<f64>> = (0..spec.person_clusters)
        .map(|_| DMatrix::from_fn(q, 1, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let w = spec.cluster_spread;
    let latents: Vec<DMatrix<f64>> = (0..spec.persons)
        .map(|p| {
            let own = DMatrix::from_fn(q, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
            if centers.is_empty() {
                own
            } else {
                // Persons cycle through the centers so every group gets an
                // even share; unit marginal variance is preserved.
                &centers[p % centers.len()] * (1.0 - w * w).sqrt() + own * w
            }
        })
        .collect();

    let n = spec.persons * 2 * spec.images_per_view;
    let mut features = DMatrix::<f64>::zeros(d, n);
    let mut person_ids = Vec::with_capacity(n);
    let mut view_ids = Vec::with_capacity(n);
    let mut col = 0usize;
    for (p, z) in latents.iter().enumerate() {
        for (v, map) in view_maps.iter().enumerate() {
            let clean = map * z;
            for _ in 0..spec.images_per_view {
                for i in 0..d {
                    features[(i, col)] =
                        clean[(i, 0)] + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                }
                person_ids.push(Some(p as i64));
                view_ids.push(v as u32);
                col += 1;
            }
        }
    }
    let tags = vec![SplitTag::Labeled; n];
    FeatureSet::new(features, person_ids, view_ids, tags)
}
