//! Bounded superellipsoid fitting with Levenberg-Marquardt.
//!
//! The residual vector stacks the radial surface distance of every cluster
//! point with two soft priors: the translation is pulled toward the
//! cluster's centre estimate (weight `sqrt(alpha)`) and the semi-axes toward
//! each other, i.e. spherical shapes (weight `sqrt(gamma)`). Semi-axis and
//! exponent parameters are kept inside a fixed box by projecting every step.

use crate::segment::Cluster;
use crate::superellipsoid::Superellipsoid;
use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("cluster has no centre estimate")]
    MissingCenter,
    #[error("cost is not finite at the initial parameters")]
    NonFiniteInit,
    #[error("invalid fit configuration: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Weight of the translation prior toward the centre estimate.
    pub alpha: f64,
    /// Weight of the axis-similarity (sphericity) prior.
    pub gamma: f64,
    /// Scale the prior rows by sqrt(point count), matching a formulation
    /// where the priors are summed once per point.
    pub replicate_priors: bool,
    pub axis_min: f64,
    pub axis_max: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub init_axis: f64,
    pub init_eps: f64,
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step stops the solve.
    pub cost_tolerance: f64,
    /// Infinity-norm of the cost gradient below which the solve stops.
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
    /// Damping is multiplied/divided by this on rejection/acceptance.
    pub damping_factor: f64,
    /// Damping beyond this aborts the solve as not converged.
    pub max_damping: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            alpha: 0.1,
            gamma: 0.1,
            replicate_priors: false,
            axis_min: 0.02,
            axis_max: 0.15,
            eps_min: 0.3,
            eps_max: 0.9,
            init_axis: 0.05,
            init_eps: 0.5,
            max_iterations: 100,
            cost_tolerance: 1e-8,
            gradient_tolerance: 1e-10,
            initial_damping: 1e-4,
            damping_factor: 10.0,
            max_damping: 1e14,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |msg: &str| Err(FitError::BadConfig(msg.into()));
        if !(self.alpha >= 0.0 && self.gamma >= 0.0) {
            return bad("prior weights must be non-negative");
        }
        if !(0.0 < self.axis_min && self.axis_min <= self.axis_max) {
            return bad("need 0 < axis_min <= axis_max");
        }
        if !(0.0 < self.eps_min && self.eps_min <= self.eps_max) {
            return bad("need 0 < eps_min <= eps_max");
        }
        if !(self.axis_min <= self.init_axis && self.init_axis <= self.axis_max) {
            return bad("init_axis must lie inside the axis bounds");
        }
        if !(self.eps_min <= self.init_eps && self.init_eps <= self.eps_max) {
            return bad("init_eps must lie inside the exponent bounds");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.cost_tolerance > 0.0 && self.gradient_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.initial_damping > 0.0 && self.damping_factor > 1.0 && self.max_damping > 0.0) {
            return bad("damping parameters out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub shape: Superellipsoid,
    pub converged: bool,
    /// Squared norm of the full residual vector at the solution.
    pub final_cost: f64,
    /// Accepted Levenberg-Marquardt steps.
    pub iterations: usize,
    /// RMS of the per-point distance residuals at the solution.
    pub residual_rms: f64,
    pub point_count: usize,
    /// Cost after the initial guess and after every accepted step.
    pub cost_trace: Vec<f64>,
}

/// Flat, serialisable view of a fit (volume in cubic metres).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub volume_m3: f64,
    pub converged: bool,
    pub final_cost: f64,
    pub iterations: usize,
    pub point_count: usize,
}

impl From<&FitResult> for FitRecord {
    fn from(fit: &FitResult) -> Self {
        let s = &fit.shape;
        FitRecord {
            a: s.a,
            b: s.b,
            c: s.c,
            eps1: s.eps1,
            eps2: s.eps2,
            tx: s.translation.x,
            ty: s.translation.y,
            tz: s.translation.z,
            phi: s.rotation.x,
            theta: s.rotation.y,
            psi: s.rotation.z,
            volume_m3: s.volume(),
            converged: fit.converged,
            final_cost: fit.final_cost,
            iterations: fit.iterations,
            point_count: fit.point_count,
        }
    }
}

impl FitRecord {
    pub fn shape(&self) -> Result<Superellipsoid, crate::superellipsoid::ShapeError> {
        Ok(
            Superellipsoid::new(self.a, self.b, self.c, self.eps1, self.eps2)?.with_pose(
                Vector3::new(self.tx, self.ty, self.tz),
                Vector3::new(self.phi, self.theta, self.psi),
            ),
        )
    }
}

const N_PARAMS: usize = 11;

fn shape_from_params(x: &[f64; N_PARAMS]) -> Superellipsoid {
    Superellipsoid {
        a: x[0],
        b: x[1],
        c: x[2],
        eps1: x[3],
        eps2: x[4],
        translation: Vector3::new(x[5], x[6], x[7]),
        rotation: Vector3::new(x[8], x[9], x[10]),
    }
}

/// Stacked residual vector: one radial distance per point, then (if enabled)
/// three translation-prior rows and three axis-similarity rows.
pub fn residuals(
    shape: &Superellipsoid,
    points: &[Point3<f64>],
    anchor: &Point3<f64>,
    config: &FitConfig,
) -> DVector<f64> {
    let prior_scale = if config.replicate_priors {
        (points.len() as f64).sqrt()
    } else {
        1.0
    };
    let mut rows = Vec::with_capacity(points.len() + 6);
    for p in points {
        rows.push(shape.distance_to_world_point(p));
    }
    if config.alpha > 0.0 {
        let k = prior_scale * config.alpha.sqrt();
        let d = shape.translation - anchor.coords;
        rows.extend_from_slice(&[k * d.x, k * d.y, k * d.z]);
    }
    if config.gamma > 0.0 {
        let k = prior_scale * config.gamma.sqrt();
        rows.extend_from_slice(&[
            k * (shape.a - shape.b),
            k * (shape.b - shape.c),
            k * (shape.c - shape.a),
        ]);
    }
    DVector::from_vec(rows)
}

fn residuals_at(
    x: &[f64; N_PARAMS],
    points: &[Point3<f64>],
    anchor: &Point3<f64>,
    config: &FitConfig,
) -> DVector<f64> {
    residuals(&shape_from_params(x), points, anchor, config)
}

/// Central finite-difference Jacobian of the residual vector, with step
/// `max(1e-6 |x_j|, 1e-8)` per parameter.
fn jacobian(
    x: &[f64; N_PARAMS],
    points: &[Point3<f64>],
    anchor: &Point3<f64>,
    config: &FitConfig,
    n_rows: usize,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(n_rows, N_PARAMS);
    for j in 0..N_PARAMS {
        let h = (1e-6 * x[j].abs()).max(1e-8);
        let mut plus = *x;
        plus[j] += h;
        let mut minus = *x;
        minus[j] -= h;
        let rp = residuals_at(&plus, points, anchor, config);
        let rm = residuals_at(&minus, points, anchor, config);
        let col = (rp - rm) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

fn clamp_params(x: &mut [f64; N_PARAMS], config: &FitConfig) {
    for v in &mut x[0..3] {
        *v = v.clamp(config.axis_min, config.axis_max);
    }
    for v in &mut x[3..5] {
        *v = v.clamp(config.eps_min, config.eps_max);
    }
}

/// Fits a bounded superellipsoid to a cluster. The cluster must carry a
/// centre estimate; its points anchor the translation prior.
///
/// Failure to converge (iteration cap or trust-region collapse) is reported
/// through [`FitResult::converged`], not as an error.
pub fn fit_superellipsoid(cluster: &Cluster, config: &FitConfig) -> Result<FitResult, FitError> {
    config.validate()?;
    if cluster.points.is_empty() {
        return Err(FitError::EmptyCluster);
    }
    let anchor = cluster.center.ok_or(FitError::MissingCenter)?;
    let points = &cluster.points.points;

    let mut x: [f64; N_PARAMS] = [
        config.init_axis,
        config.init_axis,
        config.init_axis,
        config.init_eps,
        config.init_eps,
        anchor.x,
        anchor.y,
        anchor.z,
        0.0,
        0.0,
        0.0,
    ];
    clamp_params(&mut x, config);

    let mut r = residuals_at(&x, points, &anchor, config);
    let mut cost = r.norm_squared();
    if !cost.is_finite() {
        return Err(FitError::NonFiniteInit);
    }
    let n_rows = r.len();

    let mut damping = config.initial_damping;
    let mut converged = false;
    let mut accepted_steps = 0usize;
    let mut cost_trace = vec![cost];

    'outer: for _ in 0..config.max_iterations {
        let jac = jacobian(&x, points, &anchor, config, n_rows);
        let jtr = jac.transpose() * &r;
        if (2.0 * jtr.amax()) < config.gradient_tolerance {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;

        loop {
            // Levenberg damping on the scaled diagonal, with a small floor
            // so flat directions stay solvable.
            let mut system = jtj.clone();
            for i in 0..N_PARAMS {
                system[(i, i)] += damping * (jtj[(i, i)] + 1e-12);
            }
            let step = system.cholesky().map(|ch| ch.solve(&(-&jtr)));
            let mut candidate_ok = false;
            if let Some(delta) = step {
                let mut x_new = x;
                for i in 0..N_PARAMS {
                    x_new[i] += delta[i];
                }
                clamp_params(&mut x_new, config);
                let r_new = residuals_at(&x_new, points, &anchor, config);
                let cost_new = r_new.norm_squared();
                if cost_new.is_finite() && cost_new < cost {
                    let relative_decrease = (cost - cost_new) / cost.max(1e-300);
                    x = x_new;
                    r = r_new;
                    cost = cost_new;
                    cost_trace.push(cost);
                    accepted_steps += 1;
                    damping /= config.damping_factor;
                    if relative_decrease < config.cost_tolerance || cost == 0.0 {
                        converged = true;
                    }
                    candidate_ok = true;
                }
            }
            if candidate_ok {
                break;
            }
            damping *= config.damping_factor;
            if damping > config.max_damping {
                break 'outer;
            }
        }
        if converged {
            break;
        }
    }

    let shape = shape_from_params(&x);
    let point_term: f64 = points
        .iter()
        .map(|p| {
            let d = shape.distance_to_world_point(p);
            d * d
        })
        .sum();
    Ok(FitResult {
        shape,
        converged,
        final_cost: cost,
        iterations: accepted_steps,
        residual_rms: (point_term / points.len() as f64).sqrt(),
        point_count: points.len(),
        cost_trace,
    })
}
