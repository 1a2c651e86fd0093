//! Geometry, cross-modality pairing and evaluation machinery for contouring
//! the left atrium and pulmonary veins from posed 2D intracardiac
//! echocardiography (ICE) frames.
//!
//! The crate covers the non-learned parts of a sparse-volume segmentation
//! pipeline:
//!
//! - [`geometry`]: rigid poses, posed slices and voxel grids.
//! - [`volume`]: splatting posed slices into a sparse volume, resampling
//!   volumes on slice planes, projecting 3D label maps onto slices.
//! - [`mesh`], [`procrustes`], [`voxelize`]: surface meshes, similarity
//!   alignment, closest-mesh pairing and mesh voxelization.
//! - [`metrics`], [`report`]: one-hot encodings, Dice, ASSD, inter-rater
//!   reliability and table rendering.
//! - [`losses`], [`shapes`]: adversarial/reconstruction losses with
//!   analytic gradients and layer extent arithmetic.
//! - [`augment`]: seeded similarity perturbations of volume/label pairs.
//! - [`phantom`]: a synthetic atrium with a simulated rotational ICE sweep.
//! - [`baselines`]: normalized-convolution completion and nearest-seed
//!   segmentation.
//! - [`io`], [`pipeline`]: file formats and the stages driven by the CLI.

pub mod augment;
pub mod baselines;
pub mod edt;
mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod mesh;
pub mod metrics;
pub mod phantom;
pub mod pipeline;
pub mod procrustes;
pub mod report;
pub mod shapes;
pub mod volume;
pub mod voxelize;

pub use error::{Error, Result};
pub use geometry::{GridSpec, Pose, PosedSlice, SliceGeometry};
pub use mesh::Mesh;
pub use procrustes::SimilarityTransform;
pub use volume::{LabelVolume, ScalarVolume, SliceLabelMask, SparseVolume};

/// Number of label classes: background plus six structures.
pub const NUM_CLASSES: usize = 7;

/// Class names indexed by class id.
pub const CLASS_NAMES: [&str; NUM_CLASSES] =
    ["background", "LA", "LAA", "LIPV", "LSPV", "RIPV", "RSPV"];
