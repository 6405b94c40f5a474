//! Surface reconstruction from single-viewpoint lidar point clouds.
//!
//! The pipeline bins the input cloud into a sparse voxel grid of running
//! Gaussian statistics, fits local planes from multi-scale vertex
//! neighborhoods, evaluates a truncated signed distance field over grid
//! vertices with an adaptive neighborhood-level selection, and extracts the
//! zero-crossing mesh with marching cubes. A set-to-set evaluation suite
//! (average error, Hausdorff distance, error profiles) and a synthetic lidar
//! scanner for ground-truth experiments round out the crate.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod imls;
pub mod io;
pub mod kdtree;
pub mod mesher;
pub mod metrics;
pub mod pipeline;
pub mod synth;
pub mod tsdf;

pub use error::Error;
pub use geometry::{eigen3_symmetric, fit_plane, PlaneEstimate};
pub use grid::{GridIndex, NeighborhoodStats, StatGrid, VoxelStats};
pub use mesher::{marching_cubes, TriangleMesh};
pub use tsdf::{
    compute_tsdf, gaussian_confidence, select_level, ConfidenceModel, ReconstructionConfig,
    ReconstructionMode, TsdfField,
};
