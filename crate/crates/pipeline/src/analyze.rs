use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use rayon::prelude::*;
use reef_core::eco::{report_for, MetricsError};
use reef_core::mask::resolve_overlaps;
use reef_core::{
    BoundingBox, Detection, DisjointInstanceSet, GenusLabel, ImageRef, InstanceMask, QuadratReport,
    ResolvedScene,
};
use serde::Serialize;
use thiserror::Error;

use crate::backend::{BackendError, BackendSet, Stage};
use crate::config::{ConfigError, CropMode, PipelineConfig};
use crate::image::{ImageError, QuadratImage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: {source}")]
    Backend { stage: Stage, source: BackendError },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error("all {count} quadrats failed; first failure: {first}")]
    AllFailed { count: usize, first: String },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Backend { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// Transport failures may succeed on a later attempt.
    pub fn is_retriable(&self) -> bool {
        matches!(self, PipelineError::Backend { source, .. } if source.is_retriable())
    }

    /// True for failures caused by a backend rather than by the input.
    pub fn is_backend(&self) -> bool {
        matches!(self, PipelineError::Backend { .. } | PipelineError::AllFailed { .. })
    }
}

fn at(stage: Stage) -> impl FnOnce(BackendError) -> PipelineError {
    move |source| PipelineError::Backend { stage, source }
}

/// Boxes to send to the segmenter, each with its detection's confidence.
fn prompts_with_confidence(
    detections: &[Detection],
    image: &ImageRef,
    config: &PipelineConfig,
) -> Vec<(BoundingBox, f64)> {
    detections
        .iter()
        .filter(|d| d.confidence >= config.detection_confidence_min)
        .filter_map(|d| {
            let b = d.bbox.padded(config.prompt_padding).clamp_to(image.width, image.height)?;
            Some((b, d.confidence))
        })
        .collect()
}

/// Drops detections under the confidence floor, pads the rest and clamps
/// them to the frame. Order is preserved.
pub fn generate_box_prompts(
    detections: &[Detection],
    image: &ImageRef,
    config: &PipelineConfig,
) -> Vec<BoundingBox> {
    prompts_with_confidence(detections, image, config)
        .into_iter()
        .map(|(b, _)| b)
        .collect()
}

/// Runs detect, segment, resolve and classify, and returns the labeled,
/// overlap-free scene.
pub fn analyze_scene(
    image: &QuadratImage,
    backends: &BackendSet,
    config: &PipelineConfig,
) -> Result<ResolvedScene, PipelineError> {
    let detections = backends.detector.detect(image).map_err(at(Stage::Detect))?;
    let prompts = prompts_with_confidence(&detections, image.meta(), config);
    let roi = config.roi.as_deref().cloned();
    if prompts.is_empty() {
        return Ok(ResolvedScene::new(image.meta().clone(), roi, DisjointInstanceSet::empty())?);
    }

    let boxes: Vec<BoundingBox> = prompts.iter().map(|p| p.0).collect();
    let masks = backends.segmenter.segment(image, &boxes).map_err(at(Stage::Segment))?;
    if masks.len() != boxes.len() {
        return Err(at(Stage::Segment)(BackendError::Protocol {
            message: format!("{} masks returned for {} prompts", masks.len(), boxes.len()),
            excerpt: String::new(),
        }));
    }
    let mut instances = Vec::with_capacity(masks.len());
    for (mask, (_, confidence)) in masks.into_iter().zip(&prompts) {
        if (mask.width(), mask.height()) != (image.width(), image.height()) {
            return Err(at(Stage::Segment)(BackendError::Protocol {
                message: format!(
                    "mask is {}x{} but the image is {}x{}",
                    mask.width(),
                    mask.height(),
                    image.width(),
                    image.height()
                ),
                excerpt: String::new(),
            }));
        }
        if mask.is_empty() {
            continue;
        }
        instances.push(InstanceMask::new(mask, *confidence, None).expect("non-empty mask"));
    }

    let mut resolved = resolve_overlaps(&instances).map_err(MetricsError::from)?;
    for i in 0..resolved.len() {
        let inst = &resolved.instances()[i];
        let c = match config.classifier_crop {
            CropMode::FullWithMask => backends.classifier.classify(image, &inst.mask),
            CropMode::Crop => {
                let crop = image.crop(&inst.bbox)?;
                let mask = inst.mask.crop(&inst.bbox).map_err(MetricsError::from)?;
                backends.classifier.classify(&crop, &mask)
            }
        }
        .map_err(at(Stage::Classify))?;
        let label = GenusLabel::new(c.genus, c.confidence).map_err(|e| {
            at(Stage::Classify)(BackendError::Protocol {
                message: e.to_string(),
                excerpt: String::new(),
            })
        })?;
        resolved.set_genus(i, label);
    }
    Ok(ResolvedScene::new(image.meta().clone(), roi, resolved)?)
}

/// One quadrat through the full cascade into a report.
pub fn analyze_quadrat(
    image: &QuadratImage,
    backends: &BackendSet,
    config: &PipelineConfig,
) -> Result<QuadratReport, PipelineError> {
    config.validate()?;
    let scene = analyze_scene(image, backends, config)?;
    Ok(report_for(&scene)?)
}

#[derive(Debug, Clone)]
pub enum QuadratInput {
    /// Decoded inside the worker, so a bad file only fails its own quadrat.
    Path(PathBuf),
    Loaded(QuadratImage),
}

impl QuadratInput {
    fn label(&self) -> String {
        match self {
            QuadratInput::Path(p) => p.display().to_string(),
            QuadratInput::Loaded(img) => img.id().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratFailure {
    /// Position in the batch input.
    pub index: usize,
    pub quadrat: String,
    pub stage: Option<Stage>,
    pub retriable: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub quadrats: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Mean over successful quadrats.
    pub mean_total_cover: f64,
    /// Mean per-genus cover over successful quadrats; a quadrat without
    /// the genus contributes 0.
    pub mean_genus_cover: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    /// One entry per input, in input order.
    pub outcomes: Vec<Result<QuadratReport, QuadratFailure>>,
    pub summary: BatchSummary,
}

impl BatchResult {
    pub fn reports(&self) -> impl Iterator<Item = &QuadratReport> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &QuadratFailure> {
        self.outcomes.iter().filter_map(|o| o.as_ref().err())
    }
}

fn summarize(outcomes: &[Result<QuadratReport, QuadratFailure>]) -> BatchSummary {
    let reports: Vec<&QuadratReport> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let n = reports.len();
    let mut genus_sum: BTreeMap<String, f64> = BTreeMap::new();
    for r in &reports {
        for g in &r.per_genus {
            *genus_sum.entry(g.genus.clone()).or_default() += g.cover;
        }
    }
    let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
    BatchSummary {
        quadrats: outcomes.len(),
        succeeded: n,
        failed: outcomes.len() - n,
        mean_total_cover: mean(reports.iter().map(|r| r.total_cover).sum()),
        mean_genus_cover: genus_sum.into_iter().map(|(g, s)| (g, mean(s))).collect(),
    }
}

fn run_one(
    index: usize,
    input: &QuadratInput,
    backends: &BackendSet,
    config: &PipelineConfig,
) -> Result<QuadratReport, QuadratFailure> {
    let result = match input {
        QuadratInput::Path(p) => QuadratImage::open(p)
            .map_err(PipelineError::from)
            .and_then(|img| analyze_quadrat(&img, backends, config)),
        QuadratInput::Loaded(img) => analyze_quadrat(img, backends, config),
    };
    result.map_err(|e| QuadratFailure {
        index,
        quadrat: input.label(),
        stage: e.stage(),
        retriable: e.is_retriable(),
        message: e.to_string(),
    })
}

/// Analyzes every input with up to `batch_parallelism` quadrats in flight.
/// Per-quadrat failures are recorded, not propagated, unless every quadrat
/// fails.
pub fn analyze_batch(
    inputs: &[QuadratInput],
    backends: &BackendSet,
    config: &PipelineConfig,
) -> Result<BatchResult, PipelineError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.batch_parallelism)
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let mut outcomes: Vec<Result<QuadratReport, QuadratFailure>> = pool.install(|| {
        inputs
            .par_iter()
            .enumerate()
            .map(|(i, input)| run_one(i, input, backends, config))
            .collect()
    });

    let mut seen = HashSet::new();
    for (i, o) in outcomes.iter_mut().enumerate() {
        if let Ok(r) = o {
            if !seen.insert(r.quadrat_id.clone()) {
                *o = Err(QuadratFailure {
                    index: i,
                    quadrat: inputs[i].label(),
                    stage: None,
                    retriable: false,
                    message: format!("duplicate quadrat id {:?}", r.quadrat_id),
                });
            }
        }
    }

    if !outcomes.is_empty() && outcomes.iter().all(|o| o.is_err()) {
        let first = outcomes[0].as_ref().expect_err("all failed").message.clone();
        return Err(PipelineError::AllFailed {
            count: outcomes.len(),
            first,
        });
    }
    let summary = summarize(&outcomes);
    Ok(BatchResult { outcomes, summary })
}
