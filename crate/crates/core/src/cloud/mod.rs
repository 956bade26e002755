//! Point cloud container, neighbour queries, filtering, normal estimation
//! and file I/O.

mod filter;
pub mod io;
mod kdtree;
mod normals;

pub use filter::{statistical_outlier_removal, SorOutcome};
pub use kdtree::KnnIndex;
pub use normals::estimate_normals;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("point cloud has {got} points but the operation needs at least {needed}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("attribute length mismatch: {attribute} has {got} entries for {points} points")]
    AttributeMismatch {
        attribute: &'static str,
        got: usize,
        points: usize,
    },
}

/// Unordered 3-D point set with optional per-point colour and normal
/// attributes.
///
/// Attribute vectors, when present, always have the same length as `points`.
/// Normals use NaN components to mark entries whose estimation failed; use
/// [`PointCloud::normal`] to read them safely.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub normals: Option<Vec<Vector3<f64>>>,
    /// Coordinate frame label ("sensor" or "world").
    pub frame: String,
}

impl PointCloud {
    pub fn new(frame: impl Into<String>) -> Self {
        PointCloud {
            points: Vec::new(),
            colors: None,
            normals: None,
            frame: frame.into(),
        }
    }

    pub fn from_points(points: Vec<Point3<f64>>, frame: impl Into<String>) -> Self {
        PointCloud {
            points,
            colors: None,
            normals: None,
            frame: frame.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Normal of point `i` if normals are present and the entry is valid
    /// (finite components).
    pub fn normal(&self, i: usize) -> Option<Vector3<f64>> {
        self.normals
            .as_ref()
            .map(|n| n[i])
            .filter(|n| n.x.is_finite() && n.y.is_finite() && n.z.is_finite())
    }

    /// Checks the attribute-length invariant.
    pub fn validate(&self) -> Result<(), CloudError> {
        if let Some(c) = &self.colors {
            if c.len() != self.points.len() {
                return Err(CloudError::AttributeMismatch {
                    attribute: "colors",
                    got: c.len(),
                    points: self.points.len(),
                });
            }
        }
        if let Some(n) = &self.normals {
            if n.len() != self.points.len() {
                return Err(CloudError::AttributeMismatch {
                    attribute: "normals",
                    got: n.len(),
                    points: self.points.len(),
                });
            }
        }
        Ok(())
    }

    /// New cloud containing the points at `indices` (attributes carried
    /// along), in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            frame: self.frame.clone(),
        }
    }

    pub fn centroid(&self) -> Option<Point3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }
}
