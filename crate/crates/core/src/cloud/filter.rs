//! Statistical outlier removal.

use super::{KnnIndex, PointCloud};

#[derive(Debug)]
pub struct SorOutcome {
    pub cloud: PointCloud,
    /// Original indices of removed points, ascending.
    pub removed: Vec<usize>,
    /// True when the cloud was too small to filter and was passed through.
    pub skipped: bool,
}

/// Removes points whose mean distance to their `mean_k` nearest neighbours
/// exceeds the global mean by more than `stddev_mult` standard deviations
/// (population deviation). Order and attributes of surviving points are
/// preserved.
///
/// Clouds with fewer than `mean_k + 1` points are passed through unchanged
/// with `skipped` set.
pub fn statistical_outlier_removal(
    cloud: &PointCloud,
    mean_k: usize,
    stddev_mult: f64,
) -> SorOutcome {
    assert!(mean_k >= 1, "statistical filter needs mean_k >= 1");
    let n = cloud.len();
    if n < mean_k + 1 {
        return SorOutcome {
            cloud: cloud.clone(),
            removed: Vec::new(),
            skipped: true,
        };
    }

    let index = KnnIndex::build(&cloud.points);
    let mean_dists: Vec<f64> = cloud
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            // Query k+1 and drop the point itself; coincident points stay.
            let sum: f64 = index
                .nearest(p, mean_k + 1)
                .into_iter()
                .filter(|&(j, _)| j != i)
                .take(mean_k)
                .map(|(_, d)| d)
                .sum();
            sum / mean_k as f64
        })
        .collect();

    let mu = mean_dists.iter().sum::<f64>() / n as f64;
    let var = mean_dists.iter().map(|d| (d - mu) * (d - mu)).sum::<f64>() / n as f64;
    let threshold = mu + stddev_mult * var.sqrt();

    let mut kept = Vec::with_capacity(n);
    let mut removed = Vec::new();
    for (i, &d) in mean_dists.iter().enumerate() {
        if d > threshold {
            removed.push(i);
        } else {
            kept.push(i);
        }
    }
    SorOutcome {
        cloud: cloud.select(&kept),
        removed,
        skipped: false,
    }
}
