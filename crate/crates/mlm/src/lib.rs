//! # mlm — the Minimal Learning Machine
//!
//! A distance-based supervised learner in two steps:
//!
//! 1. **Distance regression.** Pick `K` reference rows from the training
//!    set, build the input-space and output-space distance matrices
//!    against them, and estimate the linear map `B` between the two by
//!    ordinary least squares.
//! 2. **Multilateration.** For a query, predict its output-space distances
//!    to the reference outputs through `B`, then recover the output point
//!    from those distances by solving a small linear system (one anchor is
//!    subtracted out to linearize the squared-distance equations).
//!
//! With every training row as a reference and pairwise-distinct inputs,
//! the square distance matrix is invertible (its determinant sign
//! alternates with the row count), so the model interpolates the training
//! set exactly: step 1 reproduces the output distances and step 2 recovers
//! the output points.
//!
//! How the `K` references are chosen drives generalization at small `K`.
//! Besides the uniform [`random`](refselect::SelectionMethod::Random)
//! baseline, this crate ships four clustering-based strategies that spread
//! the references over the input space: k-means++ sampling, k-medoids
//! refinement of it, average-linkage (UPGMA) prototypes, and a
//! deterministic farthest-point (maximin) traversal.
//!
//! ```
//! use mlm::{Dataset, ReferenceSet, MlmModel};
//!
//! // y = 2x on two training points; full reference set.
//! let data = Dataset::from_rows(&[vec![0.0], vec![1.0]], &[vec![0.0], vec![2.0]])?;
//! let model = MlmModel::fit(&data, ReferenceSet::full(&data))?;
//!
//! // Interpolation: training inputs come back exactly.
//! let y = model.predict_scaled(&[1.0])?;
//! assert!((y[0] - 2.0).abs() < 1e-9);
//!
//! // And the midpoint lands between the two outputs.
//! let y = model.predict_scaled(&[0.5])?;
//! assert!((y[0] - 1.0).abs() < 1e-9);
//! # Ok::<(), mlm::Error>(())
//! ```
//!
//! The [`evaluation`] module implements the benchmark protocol used to
//! compare selection strategies: distribution-balanced nested
//! cross-validation (3 outer / 10 inner folds), `[0, 1]` scaling fitted on
//! training rows, a percentage grid over the reference count, and RMSE
//! reporting with fully derived seeds so runs replay bit-for-bit.
//!
//! Runnable walkthroughs live in `examples/`; the thin `mlm` binary wraps
//! the same entry points for CSV data (`fit`, `predict`, `select-refs`,
//! `benchmark`, `gen-s1`).

pub mod data;
pub mod distance;
mod error;
pub mod evaluation;
mod linalg;
pub mod prediction;
pub mod refselect;
pub mod training;

#[doc(hidden)]
pub mod cli;
pub mod csvio;

pub use data::{Dataset, ReferenceSet, Scaler};
pub use distance::{pairwise_distances, self_distance_det_sign, DistancePair};
pub use error::{Error, Result};
pub use prediction::{
    build_lls, lls_diagnostics, multilateration_cost, predict, predict_batch, BanPolicy,
    LlsDiagnostics, LlsSolution, LlsSystem,
};
pub use refselect::{SelectionConfig, SelectionMethod};
pub use training::{train_scaled, MlmModel, TrainConfig};

/// Worker-count cap from the `MLM_THREADS` environment variable, when set
/// to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("MLM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
}
