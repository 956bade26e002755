//! Superellipsoid shape model: implicit function, radial distance, volume
//! and surface sampling.

use crate::cloud::PointCloud;
use crate::special;
use nalgebra::{Point3, Rotation3, Vector3};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("semi-axis lengths must be positive and finite, got ({0}, {1}, {2})")]
    InvalidAxes(f64, f64, f64),
    #[error("shape exponents must be positive and finite, got ({0}, {1})")]
    InvalidExponents(f64, f64),
    #[error("degenerate point at center")]
    DegeneratePoint,
}

/// Point expressed in the shape's canonical frame (centre at the origin,
/// semi-axes along the coordinate axes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPoint(pub Vector3<f64>);

/// Superellipsoid with semi-axes `a, b, c`, shape exponents `eps1`
/// (north-south) and `eps2` (east-west), and a rigid-body pose.
///
/// The orientation is stored as intrinsic Z-Y-X Euler angles
/// `(phi, theta, psi)`: the world-from-local rotation is
/// `Rz(phi) * Ry(theta) * Rx(psi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Superellipsoid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Centre position in world coordinates.
    pub translation: Vector3<f64>,
    /// Euler angles `(phi, theta, psi)` in radians.
    pub rotation: Vector3<f64>,
}

fn sgn_pow(v: f64, e: f64) -> f64 {
    v.signum() * v.abs().powf(e)
}

impl Superellipsoid {
    /// Axis-aligned shape centred at the origin. Validates parameters.
    pub fn new(a: f64, b: f64, c: f64, eps1: f64, eps2: f64) -> Result<Self, ShapeError> {
        if !(a > 0.0 && b > 0.0 && c > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(ShapeError::InvalidAxes(a, b, c));
        }
        if !(eps1 > 0.0 && eps2 > 0.0 && eps1.is_finite() && eps2.is_finite()) {
            return Err(ShapeError::InvalidExponents(eps1, eps2));
        }
        Ok(Superellipsoid {
            a,
            b,
            c,
            eps1,
            eps2,
            translation: Vector3::zeros(),
            rotation: Vector3::zeros(),
        })
    }

    pub fn with_pose(mut self, translation: Vector3<f64>, rotation: Vector3<f64>) -> Self {
        self.translation = translation;
        self.rotation = rotation;
        self
    }

    /// World-from-local rotation `Rz(phi) * Ry(theta) * Rx(psi)`.
    pub fn rotation_matrix(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.rotation.x)
            * Rotation3::from_axis_angle(&Vector3::y_axis(), self.rotation.y)
            * Rotation3::from_axis_angle(&Vector3::x_axis(), self.rotation.z)
    }

    pub fn to_local(&self, p: &Point3<f64>) -> LocalPoint {
        LocalPoint(
            self.rotation_matrix()
                .inverse_transform_vector(&(p.coords - self.translation)),
        )
    }

    pub fn to_world(&self, q: LocalPoint) -> Point3<f64> {
        Point3::from(self.rotation_matrix() * q.0 + self.translation)
    }

    /// Inside-outside function: < 1 inside, 1 on the surface, > 1 outside.
    ///
    /// Negative bases are handled with the absolute-value convention, so the
    /// value is defined and non-negative everywhere.
    pub fn implicit_value(&self, q: LocalPoint) -> f64 {
        let x = (q.0.x / self.a).abs();
        let y = (q.0.y / self.b).abs();
        let z = (q.0.z / self.c).abs();
        let xy = x.powf(2.0 / self.eps2) + y.powf(2.0 / self.eps2);
        xy.powf(self.eps2 / self.eps1) + z.powf(2.0 / self.eps1)
    }

    /// Scale factor that radially projects `q` onto the surface:
    /// `beta * q` satisfies the implicit equation.
    pub fn beta_scale(&self, q: LocalPoint) -> Result<f64, ShapeError> {
        if q.0 == Vector3::zeros() {
            return Err(ShapeError::DegeneratePoint);
        }
        Ok(self.implicit_value(q).powf(-self.eps1 / 2.0))
    }

    /// Distance from `q` to its radial projection onto the surface.
    ///
    /// Exact for spheres; an upper bound on the true Euclidean surface
    /// distance in general. At the centre (where the radial direction is
    /// undefined) the smallest semi-axis is returned.
    pub fn radial_distance(&self, q: LocalPoint) -> f64 {
        let r0 = q.0.norm();
        if r0 == 0.0 {
            return self.a.min(self.b).min(self.c);
        }
        let beta = self.implicit_value(q).powf(-self.eps1 / 2.0);
        r0 * (1.0 - beta).abs()
    }

    /// Radial surface distance of a world-frame point.
    pub fn distance_to_world_point(&self, p: &Point3<f64>) -> f64 {
        self.radial_distance(self.to_local(p))
    }

    /// Enclosed volume `2abc ε1 ε2 B(ε1/2 + 1, ε1) B(ε2/2, ε2/2)`.
    pub fn volume(&self) -> f64 {
        let b1 = special::beta(self.eps1 / 2.0 + 1.0, self.eps1)
            .expect("exponents validated positive");
        let b2 = special::beta(self.eps2 / 2.0, self.eps2 / 2.0)
            .expect("exponents validated positive");
        2.0 * self.a * self.b * self.c * self.eps1 * self.eps2 * b1 * b2
    }

    /// Samples the surface on a regular angular grid and returns the points
    /// in world coordinates.
    ///
    /// `resolution` is the azimuthal step count (minimum 8); the polar
    /// direction uses half as many steps, offset by half a step so the poles
    /// (where the parametrisation degenerates) are never hit.
    pub fn sample_surface(&self, resolution: usize) -> PointCloud {
        assert!(resolution >= 8, "surface sampling needs resolution >= 8");
        let n_eta = resolution / 2;
        let n_omega = resolution;
        let mut points = Vec::with_capacity(n_eta * n_omega);
        for i in 0..n_eta {
            let eta = -std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * (i as f64 + 0.5) / n_eta as f64;
            let ce = sgn_pow(eta.cos(), self.eps1);
            let se = sgn_pow(eta.sin(), self.eps1);
            for j in 0..n_omega {
                let omega = -std::f64::consts::PI
                    + 2.0 * std::f64::consts::PI * j as f64 / n_omega as f64;
                let local = LocalPoint(Vector3::new(
                    self.a * ce * sgn_pow(omega.cos(), self.eps2),
                    self.b * ce * sgn_pow(omega.sin(), self.eps2),
                    self.c * se,
                ));
                points.push(self.to_world(local));
            }
        }
        PointCloud::from_points(points, "world")
    }
}
