//! Independent oracles shared by the integration suites: Monte-Carlo
//! volume, brute-force surface distance, breadth-first clustering and an
//! iterative centre minimiser. Each deliberately avoids the code path it
//! checks.
#![allow(dead_code)]

use fruitmap::cloud::{estimate_normals, KnnIndex, PointCloud};
use fruitmap::segment::Cluster;
use fruitmap::superellipsoid::{LocalPoint, Superellipsoid};
use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Monte-Carlo estimate of the enclosed volume by rejection sampling over
/// the shape's local bounding box.
pub fn monte_carlo_volume(shape: &Superellipsoid, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut inside = 0usize;
    for _ in 0..samples {
        let q = LocalPoint(Vector3::new(
            rng.random_range(-shape.a..shape.a),
            rng.random_range(-shape.b..shape.b),
            rng.random_range(-shape.c..shape.c),
        ));
        if shape.implicit_value(q) < 1.0 {
            inside += 1;
        }
    }
    8.0 * shape.a * shape.b * shape.c * inside as f64 / samples as f64
}

/// Nearest-surface-point oracle: a dense parameter-grid sampling locates
/// the right basin, then a pattern search over the surface parameters
/// refines to the local minimum. Shapes with exponents at most 1 are
/// convex, so exterior queries have a unique basin and the refined value is
/// the true nearest distance; interior queries can land in a neighbouring
/// basin and are only tight to within `basin_slack`.
pub struct SurfaceOracle {
    index: KnnIndex,
    params: Vec<(f64, f64)>,
    shape: Superellipsoid,
    eta_step: f64,
    omega_step: f64,
    /// Bound on how far the dense sampling's nearest distance can sit above
    /// the true one; the parametrization compresses near the equator and
    /// poles, so this scales with the step to the smallest exponent.
    pub basin_slack: f64,
}

impl SurfaceOracle {
    pub fn new(shape: &Superellipsoid, resolution: usize) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI, TAU};
        let n_eta = (resolution / 2).max(2);
        let n_omega = resolution.max(4);
        let eta_step = PI / n_eta as f64;
        let omega_step = TAU / n_omega as f64;
        let mut points = Vec::with_capacity(n_eta * n_omega);
        let mut params = Vec::with_capacity(n_eta * n_omega);
        for i in 0..n_eta {
            let eta = -FRAC_PI_2 + (i as f64 + 0.5) * eta_step;
            for j in 0..n_omega {
                let omega = -PI + (j as f64 + 0.5) * omega_step;
                points.push(Self::surface_point(shape, eta, omega));
                params.push((eta, omega));
            }
        }
        let max_axis = shape.a.max(shape.b).max(shape.c);
        let min_eps = shape.eps1.min(shape.eps2);
        let basin_slack =
            2.0 * max_axis * (eta_step.max(omega_step) / 2.0).powf(min_eps.min(1.0));
        SurfaceOracle {
            index: KnnIndex::build(&points),
            params,
            shape: shape.clone(),
            eta_step,
            omega_step,
            basin_slack,
        }
    }

    /// Textbook surface parametrization, written out here so the oracle does
    /// not depend on the library's own sampling.
    fn surface_point(shape: &Superellipsoid, eta: f64, omega: f64) -> Point3<f64> {
        fn sp(v: f64, e: f64) -> f64 {
            v.signum() * v.abs().powf(e)
        }
        let q = Vector3::new(
            shape.a * sp(eta.cos(), shape.eps1) * sp(omega.cos(), shape.eps2),
            shape.b * sp(eta.cos(), shape.eps1) * sp(omega.sin(), shape.eps2),
            shape.c * sp(eta.sin(), shape.eps1),
        );
        shape.to_world(LocalPoint(q))
    }

    /// Distance from `p` to the nearest surface point of the basin the dense
    /// sampling lands in.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        use std::f64::consts::FRAC_PI_2;
        let (best, coarse) = {
            let (i, d) = self.index.nearest(p, 1)[0];
            (i, d)
        };
        let (mut eta, mut omega) = self.params[best];
        let mut best_d = coarse;
        let mut radius = 1.0f64;
        for _ in 0..400 {
            let mut improved = false;
            for (de, dw) in [
                (-1.0, 0.0),
                (1.0, 0.0),
                (0.0, -1.0),
                (0.0, 1.0),
                (-1.0, -1.0),
                (1.0, 1.0),
                (-1.0, 1.0),
                (1.0, -1.0),
            ] {
                let eta_t = (eta + de * radius * self.eta_step).clamp(-FRAC_PI_2, FRAC_PI_2);
                let omega_t = omega + dw * radius * self.omega_step;
                let d = (Self::surface_point(&self.shape, eta_t, omega_t) - p).norm();
                if d < best_d {
                    best_d = d;
                    eta = eta_t;
                    omega = omega_t;
                    improved = true;
                }
            }
            if improved {
                radius = (radius * 2.0).min(8.0);
            } else {
                radius *= 0.5;
                if radius < 1e-10 {
                    break;
                }
            }
        }
        best_d
    }
}

/// Breadth-first connected components under the distance tolerance,
/// size-filtered to `[min_size, max_size]` and ordered by smallest member
/// index — the clustering contract, computed the slow way.
pub fn bfs_clusters(
    points: &[Point3<f64>],
    tolerance: f64,
    min_size: usize,
    max_size: usize,
) -> Vec<Vec<usize>> {
    let mut visited = vec![false; points.len()];
    let mut clusters = Vec::new();
    for start in 0..points.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut members = vec![start];
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..points.len() {
                if !visited[j] && (points[i] - points[j]).norm_squared() <= tolerance * tolerance {
                    visited[j] = true;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        if members.len() >= min_size && members.len() <= max_size {
            clusters.push(members);
        }
    }
    clusters.sort_by_key(|m| m[0]);
    clusters
}

/// Gradient descent with backtracking on the centre objective
/// `F(w) = Σ ‖(I − nnᵀ)(w − pᵢ)‖² + λ‖w − p̄‖²`, run to a tiny gradient.
/// Independent confirmation of the closed-form solution.
pub fn iterative_center(points: &PointCloud, lambda: f64) -> Point3<f64> {
    let centroid = points.centroid().expect("non-empty cloud");
    let gradient = |w: &Vector3<f64>| {
        let mut g = 2.0 * lambda * (w - centroid.coords);
        for (i, p) in points.points.iter().enumerate() {
            let Some(normal) = points.normal(i) else {
                continue;
            };
            let n = normal.normalize();
            let d = w - p.coords;
            // ∇‖(I − nnᵀ)d‖² = 2 (I − nnᵀ) d   (projector is idempotent).
            g += 2.0 * (d - n * n.dot(&d));
        }
        g
    };
    let objective = |w: &Vector3<f64>| {
        let mut f = lambda * (w - centroid.coords).norm_squared();
        for (i, p) in points.points.iter().enumerate() {
            let Some(normal) = points.normal(i) else {
                continue;
            };
            let n = normal.normalize();
            let d = w - p.coords;
            f += (d - n * n.dot(&d)).norm_squared();
        }
        f
    };

    let mut w = centroid.coords;
    let mut step = 1.0 / (2.0 * (points.len() as f64 + lambda));
    'outer: for _ in 0..100_000 {
        let g = gradient(&w);
        if g.norm() < 1e-10 {
            break;
        }
        let mut t = step;
        let f0 = objective(&w);
        loop {
            let trial = w - t * g;
            if objective(&trial) < f0 {
                w = trial;
                step = t * 1.5;
                break;
            }
            t *= 0.5;
            if t < 1e-18 {
                // The objective can no longer strictly decrease in floats;
                // strong convexity puts us well inside any tolerance of
                // interest.
                break 'outer;
            }
        }
    }
    Point3::from(w)
}

/// Uniformly distributed unit vector.
pub fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        let v = Vector3::new(x, y, z);
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Random shape inside the fit bounds with fruit-like proportions
/// (axis ratio at most 2).
pub fn random_fruit_shape(rng: &mut ChaCha8Rng) -> Superellipsoid {
    let axes = loop {
        let a: f64 = rng.random_range(0.03..0.12);
        let b: f64 = rng.random_range(0.03..0.12);
        let c: f64 = rng.random_range(0.03..0.12);
        let max = a.max(b).max(c);
        let min = a.min(b).min(c);
        if max <= 2.0 * min {
            break (a, b, c);
        }
    };
    Superellipsoid::new(
        axes.0,
        axes.1,
        axes.2,
        rng.random_range(0.4..0.85),
        rng.random_range(0.4..0.85),
    )
    .unwrap()
    .with_pose(
        Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        ),
        Vector3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.0..3.0),
        ),
    )
}

/// Surface samples restricted to the half-space `(p − centre)·direction ≥ 0`
/// with isotropic Gaussian noise added.
pub fn hemisphere_cluster(
    shape: &Superellipsoid,
    direction: &Vector3<f64>,
    noise_sigma: f64,
    resolution: usize,
    rng: &mut ChaCha8Rng,
) -> PointCloud {
    let center = Point3::from(shape.translation);
    let mut kept = Vec::new();
    for p in &shape.sample_surface(resolution).points {
        if (p - center).dot(direction) < 0.0 {
            continue;
        }
        let noise = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ) * noise_sigma;
        kept.push(p + noise);
    }
    PointCloud::from_points(kept, "world")
}

/// Attaches normals and a centre estimate, as the pipeline would before
/// fitting.
pub fn cluster_from_cloud(points: &PointCloud, normals_k: usize, lambda: f64) -> Cluster {
    let points = estimate_normals(points, normals_k).expect("enough points for normals");
    let center = fruitmap::segment::estimate_center(&points, lambda).expect("centre estimate");
    let indices = (0..points.len()).collect();
    Cluster {
        points,
        indices,
        center: Some(center),
    }
}
