//! One TOML document configuring every pipeline stage. Missing sections and
//! keys fall back to defaults; unknown keys are rejected.

use crate::eval::synth::SceneSpec;
use crate::fit::FitConfig;
use crate::segment::{ClusterParams, HsvThresholds};
use crate::tsdf::TsdfConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Statistical outlier removal stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub mean_k: usize,
    pub stddev_mult: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            mean_k: 50,
            stddev_mult: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalsConfig {
    /// Neighbourhood size for the covariance estimate.
    pub k: usize,
}

impl Default for NormalsConfig {
    fn default() -> Self {
        NormalsConfig { k: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Detections farther than this (metres) from any ground-truth centre
    /// stay unmatched.
    pub max_center_distance: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            max_center_distance: 0.20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Angular resolution for point clouds sampled from fitted shapes.
    pub shape_resolution: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            shape_resolution: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub segment: HsvThresholds,
    pub filter: FilterConfig,
    pub normals: NormalsConfig,
    pub tsdf: TsdfConfig,
    pub cluster: ClusterParams,
    pub fit: FitConfig,
    pub eval: EvalSettings,
    pub output: OutputConfig,
    pub scene: SceneSpec,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let config: PipelineConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if !(self.segment.sat_min >= 0.0 && self.segment.sat_min <= 1.0)
            || !(self.segment.val_min >= 0.0 && self.segment.val_min <= 1.0)
        {
            return Err(ConfigError::Invalid(
                "segment saturation/value thresholds must lie in [0, 1]".into(),
            ));
        }
        if !(self.segment.hue_max_deg >= 0.0 && self.segment.hue_min_deg <= 360.0) {
            return Err(ConfigError::Invalid(
                "segment hue thresholds must lie in [0, 360] degrees".into(),
            ));
        }
        if self.filter.mean_k == 0 {
            return Err(ConfigError::Invalid("filter.mean_k must be at least 1".into()));
        }
        if !(self.filter.stddev_mult >= 0.0 && self.filter.stddev_mult.is_finite()) {
            return Err(ConfigError::Invalid(
                "filter.stddev_mult must be non-negative".into(),
            ));
        }
        if self.normals.k < 3 {
            return Err(ConfigError::Invalid("normals.k must be at least 3".into()));
        }
        self.tsdf.validate().map_err(|e| invalid(&e))?;
        self.cluster.validate().map_err(|e| invalid(&e))?;
        self.fit.validate().map_err(|e| invalid(&e))?;
        if !(self.eval.max_center_distance > 0.0 && self.eval.max_center_distance.is_finite()) {
            return Err(ConfigError::Invalid(
                "eval.max_center_distance must be positive".into(),
            ));
        }
        if self.output.shape_resolution < 8 {
            return Err(ConfigError::Invalid(
                "output.shape_resolution must be at least 8".into(),
            ));
        }
        self.scene.validate().map_err(|e| invalid(&e))?;
        Ok(())
    }

    /// Full TOML text with every effective value spelled out.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }
}
