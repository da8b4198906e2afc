//! Evidential semantic mapping: evidential depth and segmentation heads,
//! their training losses, a TSDF voxel map with uncertainty-aware weighting
//! and Dirichlet label fusion, plus a synthetic simulator and metrics.

pub mod cloudgen;
pub mod error;
pub mod evidmodel;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod semfuse;
pub mod simrun;
pub mod tsdf;

pub use error::{Error, Result};
pub use image::Image;
pub use scalar::Real;

/// Double precision instantiations used by the command line and tests.
pub type NigParams64 = evidmodel::NigParams<f64>;
pub type DirichletEvidence64 = evidmodel::DirichletEvidence<f64>;
pub type EvidCloud64 = cloudgen::EvidCloud<f64>;
pub type SceneSpec64 = cloudgen::SceneSpec<f64>;
pub type VoxelGrid64 = tsdf::VoxelGrid<f64>;
pub type ExperimentSpec64 = simrun::ExperimentSpec<f64>;

/// Single precision instantiations.
pub type NigParams32 = evidmodel::NigParams<f32>;
pub type DirichletEvidence32 = evidmodel::DirichletEvidence<f32>;
pub type EvidCloud32 = cloudgen::EvidCloud<f32>;
pub type SceneSpec32 = cloudgen::SceneSpec<f32>;
pub type VoxelGrid32 = tsdf::VoxelGrid<f32>;
pub type ExperimentSpec32 = simrun::ExperimentSpec<f32>;
