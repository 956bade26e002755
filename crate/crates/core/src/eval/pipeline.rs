//! End-to-end reconstruction: posed RGB-D frames in, fitted shapes,
//! detections and evaluation reports out.

use super::synth::GroundTruthFruit;
use super::{bounding_box_detection, evaluate, Detection, EvalError, EvalReport};
use crate::cloud::{estimate_normals, statistical_outlier_removal, CloudError, PointCloud};
use crate::config::{ConfigError, PipelineConfig};
use crate::fit::{fit_superellipsoid, FitError, FitResult};
use crate::segment::{
    estimate_center, euclidean_cluster, mask_to_cloud_sensor, threshold_mask, Cluster, RgbdFrame,
    SegmentError,
};
use crate::tsdf::{PosedCloud, TsdfError, TsdfGrid};
use nalgebra::Point3;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("segmentation: {0}")]
    Segment(#[from] SegmentError),
    #[error("cloud: {0}")]
    Cloud(#[from] CloudError),
    #[error("integration: {0}")]
    Tsdf(#[from] TsdfError),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
}

/// How many items survived each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageCounts {
    pub frames: usize,
    /// Frames contributing no points (empty mask or filtered away).
    pub empty_frames: usize,
    pub masked_pixels: usize,
    pub projected_points: usize,
    /// Points surviving the statistical outlier filter.
    pub filtered_points: usize,
    pub surface_points: usize,
    pub clusters: usize,
    /// Clusters dropped for failed normals, centre estimation or fit setup.
    pub dropped_clusters: usize,
    pub converged_fits: usize,
}

#[derive(Debug)]
pub struct PipelineRun {
    /// Fused surface extracted from the TSDF.
    pub surface: PointCloud,
    /// Size-filtered clusters with normals and centre estimates attached
    /// where they could be computed.
    pub clusters: Vec<Cluster>,
    /// One entry per cluster; `None` when the cluster was dropped before
    /// fitting.
    pub fits: Vec<Option<FitResult>>,
    /// Converged fitted shapes, labelled `det_NN` by cluster index.
    pub detections: Vec<Detection>,
    /// Axis-aligned bounding box of every cluster, labelled `bbox_NN`.
    pub baseline_detections: Vec<Detection>,
    pub counts: StageCounts,
    /// Present when ground truth was supplied.
    pub report: Option<EvalReport>,
    pub baseline_report: Option<EvalReport>,
}

/// Runs segmentation, fusion, clustering and shape fitting over the frames,
/// evaluating against `truth` when given. Deterministic: the same frames and
/// config always produce the same result.
pub fn run_pipeline(
    frames: &[RgbdFrame],
    truth: Option<&[GroundTruthFruit]>,
    config: &PipelineConfig,
) -> Result<PipelineRun, PipelineError> {
    config.validate()?;
    let mut counts = StageCounts {
        frames: frames.len(),
        ..StageCounts::default()
    };

    let mut grid = TsdfGrid::new(config.tsdf.clone())?;
    for frame in frames {
        let mask = threshold_mask(frame, &config.segment);
        counts.masked_pixels += mask.count();
        if mask.count() == 0 {
            counts.empty_frames += 1;
            continue;
        }
        let projection = mask_to_cloud_sensor(frame, &mask)?;
        counts.projected_points += projection.cloud.len();
        if projection.cloud.is_empty() {
            counts.empty_frames += 1;
            continue;
        }
        let outcome = statistical_outlier_removal(
            &projection.cloud,
            config.filter.mean_k,
            config.filter.stddev_mult,
        );
        counts.filtered_points += outcome.cloud.len();
        if outcome.cloud.is_empty() {
            counts.empty_frames += 1;
            continue;
        }
        grid.integrate(&PosedCloud {
            cloud: outcome.cloud,
            sensor_pose: frame.sensor_pose,
        })?;
    }

    let surface = grid.extract_surface();
    counts.surface_points = surface.len();
    let raw_clusters = euclidean_cluster(&surface, &config.cluster);
    counts.clusters = raw_clusters.len();

    // Per-cluster work is independent; parallelise but keep cluster order.
    let processed: Vec<(Cluster, Option<FitResult>)> = raw_clusters
        .into_par_iter()
        .map(|mut cluster| {
            match estimate_normals(&cluster.points, config.normals.k) {
                Ok(with_normals) => cluster.points = with_normals,
                Err(_) => return (cluster, None),
            }
            match estimate_center(&cluster.points, config.cluster.lambda) {
                Ok(center) => cluster.center = Some(center),
                Err(_) => return (cluster, None),
            }
            let fit = fit_superellipsoid(&cluster, &config.fit).ok();
            (cluster, fit)
        })
        .collect();

    let mut clusters = Vec::with_capacity(processed.len());
    let mut fits = Vec::with_capacity(processed.len());
    let mut detections = Vec::new();
    let mut baseline_detections = Vec::new();
    for (i, (cluster, fit)) in processed.into_iter().enumerate() {
        baseline_detections.push(bounding_box_detection(&cluster.points, format!("bbox_{i:02}")));
        match &fit {
            Some(result) => {
                if result.converged {
                    counts.converged_fits += 1;
                    detections.push(Detection {
                        label: format!("det_{i:02}"),
                        center: Point3::from(result.shape.translation),
                        volume: result.shape.volume(),
                    });
                }
            }
            None => counts.dropped_clusters += 1,
        }
        clusters.push(cluster);
        fits.push(fit);
    }

    let (report, baseline_report) = match truth {
        Some(truth) => {
            let truth_dets: Vec<Detection> = truth.iter().map(|f| f.detection()).collect();
            let max_dist = config.eval.max_center_distance;
            (
                Some(evaluate(&truth_dets, &detections, max_dist)?),
                Some(evaluate(&truth_dets, &baseline_detections, max_dist)?),
            )
        }
        None => (None, None),
    };

    Ok(PipelineRun {
        surface,
        clusters,
        fits,
        detections,
        baseline_detections,
        counts,
        report,
        baseline_report,
    })
}
