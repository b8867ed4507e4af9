//! `RunConfig`: defaults, overlaid by a `key=value` file, overlaid by flags.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use reef_core::RleMask;
use reef_pipeline::{BackendDescriptor, BuildContext, CropMode, PipelineConfig, Stage};

use crate::error::CliError;

/// Environment variable naming a config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "REEF_MINER_CONFIG";

const KEYS: [&str; 13] = [
    "detector",
    "segmenter",
    "classifier",
    "mock",
    "seed",
    "detection_confidence_min",
    "prompt_padding",
    "classifier_crop",
    "batch_parallelism",
    "http_timeout_secs",
    "roi",
    "out",
    "csv",
];

/// Every setting `analyze` reads, before validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub detector: Option<String>,
    pub segmenter: Option<String>,
    pub classifier: Option<String>,
    /// Fills any unset stage with the in-process mock.
    pub mock: bool,
    pub seed: Option<u64>,
    pub detection_confidence_min: Option<f64>,
    pub prompt_padding: Option<u32>,
    pub classifier_crop: Option<CropMode>,
    pub batch_parallelism: Option<usize>,
    pub http_timeout_secs: Option<u64>,
    pub roi: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

/// A validated [`RunConfig`], ready to build backends from.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub pipeline: PipelineConfig,
    pub detector: BackendDescriptor,
    pub segmenter: BackendDescriptor,
    pub classifier: BackendDescriptor,
    pub context: BuildContext,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Invalid(format!("config line {line}: {key}: {e}")))
}

impl RunConfig {
    /// Parses a flat `key=value` file. `#` starts a comment; blank lines
    /// are skipped; unknown and repeated keys are errors.
    pub fn parse_file(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("config line {n}: expected key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(CliError::Invalid(format!("config line {n}: unknown key {key:?}")));
            }
            if !seen.insert(key.to_string()) {
                return Err(CliError::Invalid(format!("config line {n}: {key} given twice")));
            }
            match key {
                "detector" => cfg.detector = Some(value.to_string()),
                "segmenter" => cfg.segmenter = Some(value.to_string()),
                "classifier" => cfg.classifier = Some(value.to_string()),
                "mock" => cfg.mock = parse_value(key, value, n)?,
                "seed" => cfg.seed = Some(parse_value(key, value, n)?),
                "detection_confidence_min" => cfg.detection_confidence_min = Some(parse_value(key, value, n)?),
                "prompt_padding" => cfg.prompt_padding = Some(parse_value(key, value, n)?),
                "classifier_crop" => cfg.classifier_crop = Some(parse_value(key, value, n)?),
                "batch_parallelism" => cfg.batch_parallelism = Some(parse_value(key, value, n)?),
                "http_timeout_secs" => cfg.http_timeout_secs = Some(parse_value(key, value, n)?),
                "roi" => cfg.roi = Some(PathBuf::from(value)),
                "out" => cfg.out = Some(PathBuf::from(value)),
                "csv" => cfg.csv = Some(PathBuf::from(value)),
                _ => unreachable!("key list checked above"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse_file(&text)
    }

    /// Values set in `over` win; `mock` is on if either side sets it.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            detector: over.detector.or(self.detector),
            segmenter: over.segmenter.or(self.segmenter),
            classifier: over.classifier.or(self.classifier),
            mock: over.mock || self.mock,
            seed: over.seed.or(self.seed),
            detection_confidence_min: over.detection_confidence_min.or(self.detection_confidence_min),
            prompt_padding: over.prompt_padding.or(self.prompt_padding),
            classifier_crop: over.classifier_crop.or(self.classifier_crop),
            batch_parallelism: over.batch_parallelism.or(self.batch_parallelism),
            http_timeout_secs: over.http_timeout_secs.or(self.http_timeout_secs),
            roi: over.roi.or(self.roi),
            out: over.out.or(self.out),
            csv: over.csv.or(self.csv),
        }
    }

    /// Checks every value and loads the ROI, before any work starts.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let defaults = PipelineConfig::default();
        let roi = match &self.roi {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                let mask: RleMask = serde_json::from_str(&text)
                    .map_err(|e| CliError::Invalid(format!("{}: not an RLE mask: {e}", p.display())))?;
                Some(Arc::new(mask))
            }
            None => None,
        };
        let pipeline = PipelineConfig {
            detection_confidence_min: self.detection_confidence_min.unwrap_or(defaults.detection_confidence_min),
            prompt_padding: self.prompt_padding.unwrap_or(defaults.prompt_padding),
            classifier_crop: self.classifier_crop.unwrap_or(defaults.classifier_crop),
            batch_parallelism: self.batch_parallelism.unwrap_or(defaults.batch_parallelism),
            roi,
        };
        pipeline.validate()?;

        let descriptor = |stage: Stage, spec: &Option<String>| -> Result<BackendDescriptor, CliError> {
            match spec {
                Some(s) => Ok(BackendDescriptor::parse(stage, s)?),
                None if self.mock => Ok(BackendDescriptor::mock(stage)),
                None => Err(CliError::Invalid(format!("no {stage} backend; pass --{}, or --mock", flag(stage)))),
            }
        };
        let context = BuildContext {
            seed: self.seed.unwrap_or(0),
            http_timeout: match self.http_timeout_secs {
                Some(0) => return Err(CliError::Invalid("http_timeout_secs must be positive".into())),
                Some(s) => Duration::from_secs(s),
                None => BuildContext::default().http_timeout,
            },
        };
        Ok(Resolved {
            detector: descriptor(Stage::Detect, &self.detector)?,
            segmenter: descriptor(Stage::Segment, &self.segmenter)?,
            classifier: descriptor(Stage::Classify, &self.classifier)?,
            pipeline,
            context,
            out: self.out.clone(),
            csv: self.csv.clone(),
        })
    }
}

fn flag(stage: Stage) -> &'static str {
    match stage {
        Stage::Detect => "detector",
        Stage::Segment => "segmenter",
        Stage::Classify => "classifier",
    }
}
