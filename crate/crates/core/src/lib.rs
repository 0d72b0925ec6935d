//! Pairwise Potts (grid and dense CRF) segmentation energies, discrete
//! solvers, and two trainers for a per-pixel classifier under a regularized
//! loss: plain gradient descent on the quadratic relaxation, and an
//! alternating direction scheme that splits the loss into an SGD step and a
//! discrete labeling step solved with graph cuts.
//!
//! Module map:
//! - [`types`]: rasters, labelings, soft segmentations, scribbles, graphs.
//! - [`io`]: PGM/PPM images, scribble rasters, chain sidecars.
//! - [`energy`]: pairwise weights, Potts energy and its relaxation, unaries.
//! - [`solvers`]: max-flow, α-expansion, ICM, mean-field, brute force.
//! - [`model`]: the differentiable pixel classifier and SGD.
//! - [`training`]: pCE pretraining, GD and ADM trainers.
//! - [`metrics`]: mIoU, pixel accuracy, trimap accuracy.
//! - [`experiments`]: synthetic scenes, landscape study, comparisons.

pub mod energy;
pub mod error;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solvers;
pub mod training;
pub mod types;

pub use error::{Error, Result};
