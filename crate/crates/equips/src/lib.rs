//! Segmentation-uncertainty propagation for image-based simulation.
//!
//! The crate turns a stack of Monte Carlo segmentations of the same volume
//! into a per-voxel probability map, thresholds that map into percentile
//! segmentations, runs voxel-grid effective-transport simulations on each,
//! and fits/diagnoses a characteristic uncertainty distribution over the
//! resulting physics quantities.
//!
//! Modules:
//! - [`grid`] — voxel-grid domain model (probability maps, uncertainty maps,
//!   percentile thresholding, connectivity, volume fractions)
//! - [`io`] — NPY volumes, quantity/distribution CSVs, binary STL, and a
//!   synthetic phantom sampler for testing without a segmentation network
//! - [`solver`] — matrix-free finite-volume steady diffusion solver giving
//!   effective conductivity, porosity, and tortuosity per segmentation
//! - [`mesh`] — isosurface extraction from the real-valued probability map
//! - [`dist`] — characteristic distribution fits, goodness-of-fit,
//!   monotonicity and envelope diagnostics, adaptive percentile suggestion
//! - [`pipeline`] — declarative sweep orchestration behind the `equips` CLI
//!
//! See the crate `examples/` directory for one runnable example per major
//! capability.

pub mod dist;
pub mod grid;
pub mod io;
pub mod mesh;
pub mod pipeline;
pub mod solver;
