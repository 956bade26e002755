//! Reconstruction of fruit-sized convex shapes from RGB-D sequences.
//!
//! The crate covers the full pipeline: colour-threshold segmentation of
//! registered RGB-D frames, TSDF fusion of the masked depth, surface
//! extraction, Euclidean clustering, and bounded superellipsoid fitting,
//! plus synthetic scene generation and evaluation against ground truth.

pub mod cloud;
pub mod config;
pub mod eval;
pub mod fit;
pub mod segment;
pub mod special;
pub mod superellipsoid;
pub mod tsdf;

pub use cloud::PointCloud;
pub use superellipsoid::Superellipsoid;
