//! Deterministic stand-ins for the three model stages.
//!
//! Every draw is `next_u64() % n` on a SplitMix64 stream so the layout can
//! be reproduced bit for bit outside Rust.

use std::sync::Arc;

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use reef_core::mask::rasterize_box;
use reef_core::{canonical_taxonomy, BoundingBox, Detection, RleMask, Taxonomy};

use crate::backend::{
    Alternate, BackendError, BackendSet, Classification, Classifier, Detector, Segmenter,
};
use crate::image::QuadratImage;

const GRID: i64 = 3;

struct Draws(SplitMix64);

impl Draws {
    fn new(seed: u64) -> Self {
        Draws(SplitMix64::seed_from_u64(seed))
    }

    fn below(&mut self, n: u64) -> u64 {
        self.0.next_u64() % n
    }
}

/// Detector placing boxes on a 3x3 grid of cells.
///
/// Each box contains the centre of its cell and may spill up to a quarter
/// cell into its neighbours, so boxes overlap but none can be swallowed
/// whole by overlap resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MockDetector {
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq)]
enum Layout {
    Seeded { seed: u64, count: Option<usize> },
    Fixed(Vec<Detection>),
}

impl MockDetector {
    /// 2 to 6 boxes, all drawn from `seed`.
    pub fn seeded(seed: u64) -> Self {
        Self {
            layout: Layout::Seeded { seed, count: None },
        }
    }

    /// Exactly `count` boxes (at most 9).
    pub fn with_count(seed: u64, count: usize) -> Self {
        Self {
            layout: Layout::Seeded {
                seed,
                count: Some(count.min(9)),
            },
        }
    }

    /// Returns `detections` for every image.
    pub fn fixed(detections: Vec<Detection>) -> Self {
        Self {
            layout: Layout::Fixed(detections),
        }
    }
}

/// The seeded grid layout for a `width`×`height` frame. Frames under 24
/// pixels on a side get no boxes.
pub fn grid_layout(seed: u64, count: Option<usize>, width: u32, height: u32) -> Vec<Detection> {
    let (cw, ch) = (i64::from(width) / GRID, i64::from(height) / GRID);
    if cw < 8 || ch < 8 {
        return Vec::new();
    }
    let mut d = Draws::new(seed);
    let n = match count {
        Some(n) => n,
        None => 2 + d.below(5) as usize,
    };
    let mut cells: Vec<i64> = (0..GRID * GRID).collect();
    for i in (1..cells.len()).rev() {
        let j = d.below(i as u64 + 1) as usize;
        cells.swap(i, j);
    }
    let (w, h) = (i64::from(width), i64::from(height));
    cells
        .into_iter()
        .take(n)
        .map(|cell| {
            let (x0, y0) = (cell % GRID * cw, cell / GRID * ch);
            let spill_x = (cw / 2 + 1) as u64;
            let spill_y = (ch / 2 + 1) as u64;
            let x_min = x0 + cw / 4 - d.below(spill_x) as i64;
            let y_min = y0 + ch / 4 - d.below(spill_y) as i64;
            let x_max = x0 + cw - cw / 4 + d.below(spill_x) as i64;
            let y_max = y0 + ch - ch / 4 + d.below(spill_y) as i64;
            let confidence = (300 + d.below(700)) as f64 / 1000.0;
            let bbox = BoundingBox {
                x_min: x_min.max(0),
                y_min: y_min.max(0),
                x_max: x_max.min(w),
                y_max: y_max.min(h),
            };
            Detection {
                bbox,
                confidence,
                class_hint: None,
            }
        })
        .collect()
}

impl Detector for MockDetector {
    fn detect(&self, image: &QuadratImage) -> Result<Vec<Detection>, BackendError> {
        Ok(match &self.layout {
            Layout::Seeded { seed, count } => grid_layout(*seed, *count, image.width(), image.height()),
            Layout::Fixed(d) => d.clone(),
        })
    }
}

/// Segmenter returning each prompt's rasterization, inset by one pixel per
/// side when the seed is odd (unless that would empty the box).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockSegmenter {
    pub seed: u64,
}

/// The mask the mock segmenter produces for one prompt.
pub fn mock_mask(seed: u64, prompt: &BoundingBox, width: u32, height: u32) -> Result<RleMask, BackendError> {
    let clamped = prompt.clamp_to(width, height).ok_or_else(|| BackendError::Remote {
        code: "out_of_bounds".into(),
        message: format!("prompt {prompt} lies outside the {width}x{height} image"),
    })?;
    let mut target = clamped;
    if seed % 2 == 1 {
        let inset = BoundingBox {
            x_min: clamped.x_min + 1,
            y_min: clamped.y_min + 1,
            x_max: clamped.x_max - 1,
            y_max: clamped.y_max - 1,
        };
        if inset.is_valid() {
            target = inset;
        }
    }
    rasterize_box(&target, width, height).map_err(|e| BackendError::Remote {
        code: "segment".into(),
        message: e.to_string(),
    })
}

impl Segmenter for MockSegmenter {
    fn segment(
        &self,
        image: &QuadratImage,
        prompts: &[BoundingBox],
    ) -> Result<Vec<RleMask>, BackendError> {
        prompts
            .iter()
            .map(|p| mock_mask(self.seed, p, image.width(), image.height()))
            .collect()
    }
}

/// Classifier hashing the mask's tight-box centre into the canonical
/// taxonomy.
#[derive(Debug, Clone)]
pub struct MockClassifier {
    seed: u64,
    taxonomy: Arc<Taxonomy>,
}

impl MockClassifier {
    pub fn new(seed: u64) -> Self {
        let taxonomy = canonical_taxonomy().expect("bundled taxonomy is valid");
        Self {
            seed,
            taxonomy: Arc::new(taxonomy),
        }
    }

    /// Label for a box centred at integer pixel `(cx, cy)`.
    pub fn label_at(&self, cx: u64, cy: u64) -> Classification {
        let h = SplitMix64::seed_from_u64(self.seed ^ (cx << 32) ^ cy).next_u64();
        let n = self.taxonomy.len() as u64;
        let idx = (h % n) as usize;
        let k = (h >> 32) % 500;
        let name = |i: usize| self.taxonomy.get(i % n as usize).expect("index reduced").to_string();
        Classification {
            genus: name(idx),
            confidence: (500 + k) as f64 / 1000.0,
            alternates: vec![Alternate {
                genus: name(idx + 1),
                confidence: (500 - k) as f64 / 1000.0,
            }],
        }
    }
}

impl Classifier for MockClassifier {
    fn classify(&self, _image: &QuadratImage, mask: &RleMask) -> Result<Classification, BackendError> {
        let b = mask.tight_bbox().ok_or_else(|| BackendError::Remote {
            code: "empty_mask".into(),
            message: "cannot classify an empty mask".into(),
        })?;
        let cx = ((b.x_min + b.x_max) / 2) as u64;
        let cy = ((b.y_min + b.y_max) / 2) as u64;
        Ok(self.label_at(cx, cy))
    }
}

/// Classifier that labels everything with one genus.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantClassifier {
    pub genus: String,
    pub confidence: f64,
}

impl Classifier for ConstantClassifier {
    fn classify(&self, _image: &QuadratImage, _mask: &RleMask) -> Result<Classification, BackendError> {
        Ok(Classification {
            genus: self.genus.clone(),
            confidence: self.confidence,
            alternates: Vec::new(),
        })
    }
}

/// Grid detector, box-as-mask segmenter and hashing classifier, all keyed
/// by `seed`.
pub fn mock_backends(seed: u64) -> BackendSet {
    BackendSet {
        detector: Arc::new(MockDetector::seeded(seed)),
        segmenter: Arc::new(MockSegmenter { seed }),
        classifier: Arc::new(MockClassifier::new(seed)),
    }
}
