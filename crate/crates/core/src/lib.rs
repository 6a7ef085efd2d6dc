//! Saliency-guided supervoxel tokenization for 3D shapes.
//!
//! The pipeline runs from a triangle mesh to a sparse saliency volume, through a
//! saliency-derived density field and a centroidal Voronoi partition of the occupied voxels,
//! to a Z-Y-X ordered sequence of FSQ-coded supervoxel tokens. A Jacobi fixed-point decoder
//! and the geometry/token evaluation metrics complete the toolkit.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix the
//! common choices.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cvt;
pub mod error;
pub mod fsq;
pub mod geom;
pub mod jacobi;
pub mod mesh;
pub mod random;
pub mod metrics;
pub mod saliency;
pub mod scalar;
pub mod sizefield;
pub mod tokens;
pub mod volume;

pub use error::{Error, FormatError, Result};
pub use scalar::Scalar;

pub type Vec3d = geom::Vec3<f64>;
pub type Vec3f = geom::Vec3<f32>;

pub type Mesh = mesh::TriangleMesh<f64>;
pub type Mesh32 = mesh::TriangleMesh<f32>;

pub type Volume = volume::SaliencyVolume<f64>;
pub type Volume32 = volume::SaliencyVolume<f32>;

pub type SizeParams = sizefield::SizeParams<f64>;
pub type DensityField = sizefield::DensityField<f64>;

pub type Partition = cvt::SupervoxelPartition<f64>;
pub type Partition32 = cvt::SupervoxelPartition<f32>;

pub type PointSet = metrics::PointSet<f64>;
pub type Descriptor = fsq::Descriptor<f64>;
