//! Cross-view re-identification by semi-supervised subspace learning.
//!
//! The pipeline learns a discriminative embedding from a handful of labeled
//! identities plus a pool of unlabeled images: a label graph over the labeled
//! samples, a self-trained k-nearest-neighbour pseudo graph over the unlabeled
//! ones, and a generalized eigenproblem tying both together. A bank of
//! Gaussian kernels fused by alignment against the ideal label kernel lifts
//! the same construction into a nonlinear space. Evaluation follows the usual
//! cumulative match characteristic protocol with repeated random splits, with
//! an optional manifold re-ranking pass over the gallery.

pub mod data;
pub mod dense;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod graph;
pub mod kernels;
pub mod learner;
pub mod util;

pub use error::{Error, Result};

/// Sequential/parallel twins of the hot loops, exposed for the bench suite.
/// Not part of the stable API.
#[doc(hidden)]
pub mod internal {
    pub use crate::dense::{cross_sq_dists_seq, pairwise_sq_dists_seq};
    pub use crate::graph::knn_cross_view_weights_seq;
    pub use crate::kernels::build_bank_seq;

    #[cfg(feature = "parallel")]
    pub use crate::dense::{cross_sq_dists_par, pairwise_sq_dists_par};
    #[cfg(feature = "parallel")]
    pub use crate::graph::knn_cross_view_weights_par;
    #[cfg(feature = "parallel")]
    pub use crate::kernels::build_bank_par;
}
