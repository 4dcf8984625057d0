//! Per-pixel feature descriptors and their distances.

mod census;
mod sift;
mod walsh_hadamard;

pub use census::{
    census_at, census_at_radius, census_bits, census_distance, CensusDescriptor, CENSUS_RADIUS, MAX_CENSUS_BITS,
};
pub(crate) use sift::sift_distance_slices;
pub use sift::{sift_at, sift_distance, SiftDescriptor, SiftField, SIFT_BINS, SIFT_LEN, SIFT_RADIUS};
pub use walsh_hadamard::{coefficient_order, wh_at, wh_basis, wh_project, WhDescriptor, WH_LEN, WH_PATCH};
