use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use reef_core::RleMask;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{key} must be {expected}, got {value}")]
    OutOfRange {
        key: &'static str,
        expected: &'static str,
        value: String,
    },
    #[error("unknown crop mode {0:?} (expected full-with-mask or crop)")]
    CropMode(String),
    #[error("unknown transport in backend spec {0:?}")]
    Transport(String),
    #[error("backend spec {0:?} needs an endpoint")]
    MissingEndpoint(String),
    #[error("descriptor for a {got} backend used as the {expected} backend")]
    KindMismatch { expected: String, got: String },
    #[error("no factory registered for transport {0}")]
    Unregistered(String),
}

/// What the classifier receives for each instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CropMode {
    /// Whole image plus the instance mask as a visual prior.
    #[default]
    FullWithMask,
    /// Image and mask cropped to the instance's tight box.
    Crop,
}

impl FromStr for CropMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full-with-mask" | "full" => Ok(CropMode::FullWithMask),
            "crop" => Ok(CropMode::Crop),
            other => Err(ConfigError::CropMode(other.to_string())),
        }
    }
}

impl fmt::Display for CropMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CropMode::FullWithMask => "full-with-mask",
            CropMode::Crop => "crop",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Detections below this confidence never become prompts.
    pub detection_confidence_min: f64,
    /// Pixels added on every side of a box before clamping to the frame.
    pub prompt_padding: u32,
    pub classifier_crop: CropMode,
    /// Quadrats processed concurrently by [`crate::analyze_batch`].
    pub batch_parallelism: usize,
    /// Region cover is computed over; `None` means the whole image.
    pub roi: Option<Arc<RleMask>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            detection_confidence_min: 0.25,
            prompt_padding: 0,
            classifier_crop: CropMode::FullWithMask,
            batch_parallelism: 1,
            roi: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.detection_confidence_min) {
            return Err(ConfigError::OutOfRange {
                key: "detection_confidence_min",
                expected: "in [0, 1]",
                value: self.detection_confidence_min.to_string(),
            });
        }
        if self.batch_parallelism == 0 {
            return Err(ConfigError::OutOfRange {
                key: "batch_parallelism",
                expected: "a positive integer",
                value: "0".into(),
            });
        }
        Ok(())
    }
}
