//! Variational refinement of signed distance fields for thin vascular
//! structures.
//!
//! The crate turns a fixed (possibly noisy, slice-sparse) occupancy volume into
//! a smooth signed distance field by minimizing a regularized energy directly
//! over the voxel samples, then extracts and scores the zero-level-set mesh.
//!
//! Sign convention everywhere: negative inside the vessel, positive outside.
//! Volumes are stored x-fastest: `index = i + nx * (j + ny * k)`.

pub mod blur;
pub mod cli;
pub mod edt;
pub mod energy;
pub mod error;
pub mod io;
pub mod mesher;
pub mod metrics;
pub mod phantom;
pub mod reduce;
pub mod refine;
pub mod rng;
pub mod volume;

mod mc_table;

pub use error::{Error, Result};
pub use volume::{BinaryMask, Dims, GridSpacing, OccupancyVolume, SdfVolume, VoxelVolume};
