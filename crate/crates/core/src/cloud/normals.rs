//! PCA normal estimation.

use super::{CloudError, KnnIndex, PointCloud};
use nalgebra::{Matrix3, Vector3};

/// Estimates a unit normal per point as the smallest-eigenvalue eigenvector
/// of the covariance of its `k` nearest neighbours (the point itself
/// included). Normals are oriented away from the cloud centroid.
///
/// Rank-deficient neighbourhoods (fewer than two independent directions)
/// yield an all-NaN normal; such entries are reported by
/// [`PointCloud::normal`] as invalid rather than failing the whole cloud.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud, CloudError> {
    assert!(k >= 3, "normal estimation needs k >= 3");
    if cloud.len() < k + 1 {
        return Err(CloudError::InsufficientPoints {
            needed: k + 1,
            got: cloud.len(),
        });
    }
    let centroid = cloud.centroid().expect("non-empty checked above");
    let index = KnnIndex::build(&cloud.points);

    let normals: Vec<Vector3<f64>> = cloud
        .points
        .iter()
        .map(|p| {
            let nn = index.nearest(p, k);
            let mut mean = Vector3::zeros();
            for &(j, _) in &nn {
                mean += cloud.points[j].coords;
            }
            mean /= nn.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(j, _) in &nn {
                let d = cloud.points[j].coords - mean;
                cov += d * d.transpose();
            }
            cov /= nn.len() as f64;

            let eig = cov.symmetric_eigen();
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let (l_min, l_mid, l_max) = (
                eig.eigenvalues[idx[0]].max(0.0),
                eig.eigenvalues[idx[1]].max(0.0),
                eig.eigenvalues[idx[2]].max(0.0),
            );
            // A usable surface patch needs two independent tangent
            // directions; collinear or coincident neighbourhoods do not.
            if l_max <= 0.0 || l_mid <= 1e-9 * l_max {
                return Vector3::new(f64::NAN, f64::NAN, f64::NAN);
            }
            let _ = l_min;
            let mut n = eig.eigenvectors.column(idx[0]).into_owned();
            n.normalize_mut();
            if n.dot(&(p.coords - centroid.coords)) < 0.0 {
                n = -n;
            }
            n
        })
        .collect();

    let mut out = cloud.clone();
    out.normals = Some(normals);
    Ok(out)
}
