//! Dense optical flow by accurate field matching, robust edge-aware
//! interpolation and full-resolution variational refinement.
//!
//! The stages can be used individually or chained through [`pipeline`]:
//!
//! 1. [`matcher`]: coarse-to-fine correspondence search (Census or SIFT cost,
//!    Walsh-Hadamard kD-tree initialization, quadrant propagation and random
//!    search).
//! 2. [`filter`]: forward-backward consistency checks, small-region removal
//!    and 3x3 block sparsification.
//! 3. [`edges`] and [`superpixels`]: boundary maps, geodesic distances and
//!    SLIC over-segmentation.
//! 4. [`interpolator`]: per-superpixel affine models by randomized consensus
//!    with model propagation.
//! 5. [`variational`]: single-scale refinement with out-of-bounds pixels frozen.
//!
//! [`flowio`] and [`eval`] cover `.flo` / KITTI PNG files, color-wheel
//! rendering and the EPE / Fl metrics.

// `!(a > b)` deliberately rejects NaN along with the failed comparison.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod color;
pub mod descriptors;
pub mod edges;
pub mod error;
pub mod eval;
pub mod filter;
pub mod flowio;
pub mod interpolator;
pub mod matcher;
pub mod pipeline;
pub mod pyramid;
pub mod raster;
pub(crate) mod rng;
pub mod superpixels;
pub mod synthetic;
pub mod variational;

pub use error::{Error, Result};
pub use raster::{ColorSpace, FlowField, Image};
