//! Level-of-detail construction for colored point clouds.
//!
//! The input is split into octree leaves of at most `T` points with a hierarchical
//! counting sort ([`partition`]); inner nodes are then filled bottom-up with voxelized,
//! optionally color-filtered representations of their children ([`sampling`]). The
//! [`traversal`] module replays view-dependent node selection without a GPU and
//! [`codec`] serializes built trees.

pub mod codec;
pub mod error;
pub mod geometry;
pub mod ingest;
pub mod invariants;
pub mod model;
pub mod partition;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod traversal;

pub use error::{Error, Result};
pub use geometry::{cell_of, child_bounds, Aabb};
pub use invariants::{validate, ValidationReport};
pub use model::{
    BuildConfig, ColorRgb, NodeContent, NodeId, NodeKind, NodePath, Octree, OctreeNode, Point,
    Strategy, Voxel, GRID_SIZE, MAX_TREE_DEPTH,
};
pub use partition::partition;
pub use sampling::build_lod;
pub use scalar::Scalar;
pub use traversal::{select, Camera};

/// Double precision cube, the bounds type of octree nodes.
pub type Aabb64 = Aabb<f64>;
/// Single precision cube.
pub type Aabb32 = Aabb<f32>;
/// Double precision camera.
pub type Camera64 = Camera<f64>;
/// Single precision camera.
pub type Camera32 = Camera<f32>;
