//! Evaluation against ground truth: volume accuracy, greedy centre-distance
//! matching, and aggregated reports.

pub mod pipeline;
pub mod synth;

pub use pipeline::{run_pipeline, PipelineError, PipelineRun, StageCounts};
pub use synth::{generate_scene, GroundTruthFruit, Scene, SceneSpec, TruthRecord};

use crate::cloud::PointCloud;
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ground-truth volume must be positive and finite, got {0}")]
    InvalidGtVolume(f64),
    #[error("detected volume must be non-negative and finite, got {0}")]
    InvalidDetVolume(f64),
    #[error("invalid scene spec: {0}")]
    BadSpec(String),
    #[error("could not place {failed} of {requested} fruits with spacing {spacing} m")]
    Placement {
        failed: usize,
        requested: usize,
        spacing: f64,
    },
    #[error("ground-truth record {id}: {message}")]
    BadTruth { id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("ground-truth json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Relative volume agreement: 1 for exact, 0 when off by the whole
/// ground-truth volume (e.g. double or zero), negative beyond that.
pub fn volume_accuracy(v_detected: f64, v_truth: f64) -> Result<f64, EvalError> {
    if v_truth <= 0.0 || !v_truth.is_finite() {
        return Err(EvalError::InvalidGtVolume(v_truth));
    }
    if v_detected < 0.0 || !v_detected.is_finite() {
        return Err(EvalError::InvalidDetVolume(v_detected));
    }
    Ok(1.0 - (v_detected - v_truth).abs() / v_truth)
}

/// A localised volume estimate: either a ground-truth fruit or a detection
/// (fitted shape or baseline bounding box).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub label: String,
    pub center: Point3<f64>,
    pub volume: f64,
}

/// Axis-aligned bounding-box summary of a point set, the baseline detector.
pub fn bounding_box_detection(points: &PointCloud, label: impl Into<String>) -> Detection {
    let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &points.points {
        for i in 0..3 {
            min[i] = min[i].min(p[i]);
            max[i] = max[i].max(p[i]);
        }
    }
    Detection {
        label: label.into(),
        center: Point3::from((min.coords + max.coords) / 2.0),
        volume: (max.x - min.x) * (max.y - min.y) * (max.z - min.z),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub gt_index: usize,
    pub det_index: usize,
    pub center_distance: f64,
    pub volume_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
}

/// Greedy one-to-one matching: candidate pairs (centre distance strictly
/// below `max_center_distance`, volume accuracy strictly above
/// `min_accuracy`) are taken in ascending distance order, ties broken by
/// ground-truth then detection index.
pub fn match_detections(
    truth: &[Detection],
    detections: &[Detection],
    max_center_distance: f64,
    min_accuracy: f64,
) -> Result<Matching, EvalError> {
    let mut candidates = Vec::new();
    for (i, gt) in truth.iter().enumerate() {
        for (j, det) in detections.iter().enumerate() {
            let distance = (gt.center - det.center).norm();
            if distance >= max_center_distance {
                continue;
            }
            let accuracy = volume_accuracy(det.volume, gt.volume)?;
            if accuracy > min_accuracy {
                candidates.push((distance, i, j, accuracy));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut gt_used = vec![false; truth.len()];
    let mut det_used = vec![false; detections.len()];
    let mut pairs = Vec::new();
    for (distance, i, j, accuracy) in candidates {
        if gt_used[i] || det_used[j] {
            continue;
        }
        gt_used[i] = true;
        det_used[j] = true;
        pairs.push(MatchPair {
            gt_index: i,
            det_index: j,
            center_distance: distance,
            volume_accuracy: accuracy,
        });
    }
    pairs.sort_by_key(|p| p.gt_index);
    Ok(Matching {
        pairs,
        unmatched_gt: (0..truth.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_det: (0..detections.len()).filter(|&j| !det_used[j]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub gt_id: String,
    pub det_id: String,
    pub center_distance_m: f64,
    pub volume_accuracy: f64,
}

/// Aggregate comparison of detections against ground truth.
///
/// Counts and means at the minimum-accuracy thresholds (none, 0, 0.5) are
/// filters of one matching computed without an accuracy floor, so the
/// admitted sets are nested by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total_gt: usize,
    pub total_detections: usize,
    pub fruits_all: usize,
    pub fruits_ma0: usize,
    pub fruits_ma50: usize,
    /// Mean centre distance over all matched pairs, in centimetres.
    pub center_cm_mean: Option<f64>,
    pub acc_mean_all: Option<f64>,
    pub acc_mean_ma0: Option<f64>,
    pub acc_mean_ma50: Option<f64>,
    pub pairs: Vec<PairRecord>,
    pub unmatched_gt: Vec<String>,
    pub unmatched_detections: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Matches detections to ground truth and aggregates the result.
pub fn evaluate(
    truth: &[Detection],
    detections: &[Detection],
    max_center_distance: f64,
) -> Result<EvalReport, EvalError> {
    let matching = match_detections(truth, detections, max_center_distance, f64::NEG_INFINITY)?;
    let ma0: Vec<&MatchPair> = matching.pairs.iter().filter(|p| p.volume_accuracy > 0.0).collect();
    let ma50: Vec<&MatchPair> = matching.pairs.iter().filter(|p| p.volume_accuracy > 0.5).collect();
    Ok(EvalReport {
        total_gt: truth.len(),
        total_detections: detections.len(),
        fruits_all: matching.pairs.len(),
        fruits_ma0: ma0.len(),
        fruits_ma50: ma50.len(),
        center_cm_mean: mean(matching.pairs.iter().map(|p| p.center_distance * 100.0)),
        acc_mean_all: mean(matching.pairs.iter().map(|p| p.volume_accuracy)),
        acc_mean_ma0: mean(ma0.iter().map(|p| p.volume_accuracy)),
        acc_mean_ma50: mean(ma50.iter().map(|p| p.volume_accuracy)),
        pairs: matching
            .pairs
            .iter()
            .map(|p| PairRecord {
                gt_id: truth[p.gt_index].label.clone(),
                det_id: detections[p.det_index].label.clone(),
                center_distance_m: p.center_distance,
                volume_accuracy: p.volume_accuracy,
            })
            .collect(),
        unmatched_gt: matching
            .unmatched_gt
            .iter()
            .map(|&i| truth[i].label.clone())
            .collect(),
        unmatched_detections: matching
            .unmatched_det
            .iter()
            .map(|&j| detections[j].label.clone())
            .collect(),
    })
}

impl EvalReport {
    /// One header line plus one data row.
    pub fn to_csv(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            match v {
                Some(x) => x.to_string(),
                None => "nan".to_string(),
            }
        }
        let mut out = String::from(
            "fruits_all,fruits_ma0,fruits_ma50,center_cm_mean,acc_mean_all,acc_mean_ma0,acc_mean_ma50\n",
        );
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.fruits_all,
            self.fruits_ma0,
            self.fruits_ma50,
            cell(self.center_cm_mean),
            cell(self.acc_mean_all),
            cell(self.acc_mean_ma0),
            cell(self.acc_mean_ma50),
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn det(label: &str, x: f64, volume: f64) -> Detection {
        Detection {
            label: label.into(),
            center: Point3::new(x, 0.0, 0.0),
            volume,
        }
    }

    #[test]
    fn volume_accuracy_basics() {
        assert_abs_diff_eq!(volume_accuracy(1.0, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(volume_accuracy(2.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(volume_accuracy(0.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(volume_accuracy(0.5, 1.0).unwrap(), 0.5);
        assert!(volume_accuracy(3.0, 1.0).unwrap() < 0.0);
        assert!(matches!(
            volume_accuracy(1.0, 0.0),
            Err(EvalError::InvalidGtVolume(_))
        ));
        assert!(matches!(
            volume_accuracy(-1.0, 1.0),
            Err(EvalError::InvalidDetVolume(_))
        ));
    }

    #[test]
    fn bounding_box_of_unit_cube_points() {
        let cloud = PointCloud::from_points(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 2.0, 3.0),
                Point3::new(0.5, 1.0, 1.5),
            ],
            "world",
        );
        let d = bounding_box_detection(&cloud, "bbox");
        assert_eq!(d.center, Point3::new(0.5, 1.0, 1.5));
        assert_abs_diff_eq!(d.volume, 6.0);
    }

    #[test]
    fn greedy_matching_prefers_nearest() {
        let truth = vec![det("g0", 0.0, 1.0), det("g1", 0.1, 1.0)];
        let dets = vec![det("d0", 0.04, 1.0), det("d1", 0.09, 1.0)];
        // d0 is nearest to g0 (0.04) but sits between both; greedy takes
        // (g1, d1) at 0.01 first, then (g0, d0).
        let m = match_detections(&truth, &dets, 0.2, f64::NEG_INFINITY).unwrap();
        assert_eq!(m.pairs.len(), 2);
        assert_eq!((m.pairs[0].gt_index, m.pairs[0].det_index), (0, 0));
        assert_eq!((m.pairs[1].gt_index, m.pairs[1].det_index), (1, 1));
        assert!(m.unmatched_gt.is_empty() && m.unmatched_det.is_empty());
    }

    #[test]
    fn matching_respects_thresholds_strictly() {
        let truth = vec![det("g0", 0.0, 1.0)];
        // Exactly at the distance threshold: excluded (strictly less).
        let m = match_detections(&truth, &[det("d0", 0.2, 1.0)], 0.2, f64::NEG_INFINITY).unwrap();
        assert!(m.pairs.is_empty());
        // Exactly at double volume: accuracy 0, excluded at min_accuracy 0.
        let m = match_detections(&truth, &[det("d0", 0.0, 2.0)], 0.2, 0.0).unwrap();
        assert!(m.pairs.is_empty());
        let m = match_detections(&truth, &[det("d0", 0.0, 2.0)], 0.2, f64::NEG_INFINITY).unwrap();
        assert_eq!(m.pairs.len(), 1);
    }

    #[test]
    fn matching_is_one_to_one() {
        let truth = vec![det("g0", 0.0, 1.0)];
        let dets = vec![det("d0", 0.01, 1.0), det("d1", 0.02, 1.0)];
        let m = match_detections(&truth, &dets, 0.2, f64::NEG_INFINITY).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].det_index, 0);
        assert_eq!(m.unmatched_det, vec![1]);
    }

    #[test]
    fn report_thresholds_are_nested_filters() {
        let truth = vec![
            det("g0", 0.0, 1.0),
            det("g1", 0.5, 1.0),
            det("g2", 1.0, 1.0),
            det("g3", 1.5, 1.0),
        ];
        let dets = vec![
            det("d0", 0.01, 0.95), // acc 0.95: in all, ma0, ma50
            det("d1", 0.51, 0.60), // acc 0.60: in all, ma0, ma50
            det("d2", 1.01, 1.8),  // acc 0.2: in all, ma0
            det("d3", 1.51, 2.5),  // acc -0.5: only in all
        ];
        let report = evaluate(&truth, &dets, 0.2).unwrap();
        assert_eq!(report.total_gt, 4);
        assert_eq!(report.total_detections, 4);
        assert_eq!(report.fruits_all, 4);
        assert_eq!(report.fruits_ma0, 3);
        assert_eq!(report.fruits_ma50, 2);
        assert!(report.fruits_ma50 <= report.fruits_ma0);
        assert!(report.fruits_ma0 <= report.fruits_all);
        assert_abs_diff_eq!(report.center_cm_mean.unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            report.acc_mean_all.unwrap(),
            (0.95 + 0.6 + 0.2 - 0.5) / 4.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            report.acc_mean_ma0.unwrap(),
            (0.95 + 0.6 + 0.2) / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            report.acc_mean_ma50.unwrap(),
            (0.95 + 0.6) / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn empty_detections_give_zero_counts() {
        let truth = vec![det("g0", 0.0, 1.0)];
        let report = evaluate(&truth, &[], 0.2).unwrap();
        assert_eq!(report.fruits_all, 0);
        assert_eq!(report.fruits_ma0, 0);
        assert_eq!(report.fruits_ma50, 0);
        assert_eq!(report.center_cm_mean, None);
        assert_eq!(report.unmatched_gt, vec!["g0"]);
        // Serialises with null means rather than failing.
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"center_cm_mean\":null"));
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn csv_has_exactly_the_documented_columns() {
        let truth = vec![det("g0", 0.0, 1.0)];
        let dets = vec![det("d0", 0.01, 0.9)];
        let report = evaluate(&truth, &dets, 0.2).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "fruits_all,fruits_ma0,fruits_ma50,center_cm_mean,acc_mean_all,acc_mean_ma0,acc_mean_ma50"
        );
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 7);
        assert_eq!(row[0], "1");
        assert!(lines.next().is_none());
    }
}
