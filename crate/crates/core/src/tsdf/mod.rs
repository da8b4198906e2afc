//! Sparse block-hashed TSDF map with uncertainty-aware measurement weights
//! and harmonic fusion of epistemic depth variance.

mod dda;
mod grid;
mod io;

pub use dda::{traverse, voxel_center, voxel_index};
pub use grid::{
    block_of, measurement_weight, GridConfig, IntegrationSummary, TsdfVoxel, VoxelGrid, WeightMode, BLOCK_EDGE,
    BLOCK_VOXELS, VARIANCE_FLOOR,
};
pub use io::{load_evvx, read_evvx, save_evvx, save_ply, write_evvx, write_ply, PlyColoring, EVVX_MAGIC, EVVX_VERSION};
