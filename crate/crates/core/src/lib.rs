//! Bispectral optimal transport.
//!
//! Images are resampled onto a polar grid, where a planar rotation by
//! `360/K` degrees becomes a cyclic shift of the angular axis. The
//! per-radius bispectrum of the angular slices is invariant to that shift,
//! so optimal transport between bispectral embeddings matches images by
//! shape rather than orientation.
//!
//! Module map:
//!
//! - [`dataset`]: IDX loading, global normalization, seeded class-half
//!   splits, rotation augmentation.
//! - [`polar`]: Cartesian to polar resampling and angular cyclic shifts.
//! - [`spectra`]: DFT, power spectrum, bispectrum and the image embedding.
//! - [`cost`]: blocked pairwise ground costs (L1, L2, squared L2, cosine).
//! - [`ot`]: Sinkhorn, Greenkhorn and a small exact solver.
//! - [`eval`]: class assignment, accuracy, confusion matrices, distance
//!   statistics and classical MDS.
//! - [`cli`]: experiment configuration and the command implementations
//!   behind the `bispot` binary.

pub mod cli;
pub mod cost;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod ot;
pub mod polar;
pub mod rng;
pub mod spectra;

pub(crate) mod interp;

pub use cost::{pairwise_cost, CostMatrix, Metric};
pub use dataset::{LabeledImageSet, SplitPair};
pub use error::{Error, Result};
pub use ot::{greenkhorn, sinkhorn, SolverParams, TransportPlan};
pub use polar::PolarImage;
pub use spectra::{BispectralFeature, Bispectrum1D, SpectralCoefficients};
