//! Domain types shared across the crate.
//!
//! Coordinates are integer pixels with the origin at the top-left corner.
//! Boxes are half-open: a box covers columns `x_min..x_max` and rows
//! `y_min..y_max`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::RleMask;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid box ({0}, {1}, {2}, {3}): need 0 <= min < max on both axes")]
    InvalidBox(i64, i64, i64, i64),
    #[error("invalid image dimensions {0}x{1}")]
    ImageDimensions(u32, u32),
    #[error("image id must not be empty")]
    EmptyId,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("instance mask has no foreground pixels")]
    EmptyMask,
    #[error("genus name must not be empty")]
    EmptyGenus,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub source: String,
}

impl ImageRef {
    pub fn new(
        id: impl Into<String>,
        width: u32,
        height: u32,
        source: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::EmptyId);
        }
        if width == 0 || height == 0 {
            return Err(ModelError::ImageDimensions(width, height));
        }
        Ok(Self {
            id,
            width,
            height,
            source: source.into(),
        })
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

/// Half-open pixel box. Fields are public so out-of-frame boxes can be
/// expressed (e.g. before clamping); [`BoundingBox::new`] enforces validity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[i64; 4]")]
pub struct BoundingBox {
    pub x_min: i64,
    pub y_min: i64,
    pub x_max: i64,
    pub y_max: i64,
}

impl TryFrom<[i64; 4]> for BoundingBox {
    type Error = ModelError;

    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [i64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

impl BoundingBox {
    pub fn new(x_min: i64, y_min: i64, x_max: i64, y_max: i64) -> Result<Self, ModelError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(ModelError::InvalidBox(x_min, y_min, x_max, y_max))
        }
    }

    pub fn is_valid(&self) -> bool {
        0 <= self.x_min && self.x_min < self.x_max && 0 <= self.y_min && self.y_min < self.y_max
    }

    pub fn width(&self) -> u64 {
        (self.x_max - self.x_min).max(0) as u64
    }

    pub fn height(&self) -> u64 {
        (self.y_max - self.y_min).max(0) as u64
    }

    pub fn area(&self) -> u64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> u64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0);
        (w * h) as u64
    }

    /// Grows the box by `pad` pixels on every side (no clamping).
    pub fn padded(&self, pad: u32) -> BoundingBox {
        let p = i64::from(pad);
        BoundingBox {
            x_min: self.x_min - p,
            y_min: self.y_min - p,
            x_max: self.x_max + p,
            y_max: self.y_max + p,
        }
    }

    /// Intersection with the `width`×`height` frame, `None` if empty.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let b = BoundingBox {
            x_min: self.x_min.max(0),
            y_min: self.y_min.max(0),
            x_max: self.x_max.min(i64::from(width)),
            y_max: self.y_max.min(i64::from(height)),
        };
        b.is_valid().then_some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_hint: Option<String>,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self, ModelError> {
        check_confidence(confidence)?;
        Ok(Self {
            bbox,
            confidence,
            class_hint: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenusLabel {
    pub name: String,
    pub confidence: f64,
}

impl GenusLabel {
    pub fn new(name: impl Into<String>, confidence: f64) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() {
            return Err(ModelError::EmptyGenus);
        }
        check_confidence(confidence)?;
        Ok(Self { name, confidence })
    }
}

/// One segmented coral instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub mask: RleMask,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub genus: Option<GenusLabel>,
}

impl InstanceMask {
    /// Builds an instance whose box is the tight bbox of `mask`.
    pub fn new(
        mask: RleMask,
        confidence: f64,
        genus: Option<GenusLabel>,
    ) -> Result<Self, ModelError> {
        check_confidence(confidence)?;
        let bbox = mask.tight_bbox().ok_or(ModelError::EmptyMask)?;
        Ok(Self {
            mask,
            confidence,
            bbox,
            genus,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratScene {
    pub image: ImageRef,
    #[serde(default)]
    pub roi: Option<RleMask>,
    pub instances: Vec<InstanceMask>,
}

impl QuadratScene {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene serialization is infallible")
    }
}

fn check_confidence(c: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(ModelError::Confidence(c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ImageDimensions { width: u32, height: u32 },
    EmptyImageId,
    RoiDimensionMismatch { width: u32, height: u32 },
    DimensionMismatch { instance: usize, width: u32, height: u32 },
    EmptyMask { instance: usize },
    BoxNotTight { instance: usize, declared: BoundingBox, tight: BoundingBox },
    Confidence { instance: usize, value: f64 },
    EmptyGenus { instance: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ImageDimensions { width, height } => {
                write!(f, "invalid image dimensions {width}x{height}")
            }
            Violation::EmptyImageId => write!(f, "empty image id"),
            Violation::RoiDimensionMismatch { width, height } => {
                write!(f, "roi dimension mismatch: {width}x{height}")
            }
            Violation::DimensionMismatch {
                instance,
                width,
                height,
            } => write!(f, "instance {instance}: dimension mismatch ({width}x{height})"),
            Violation::EmptyMask { instance } => write!(f, "instance {instance}: empty mask"),
            Violation::BoxNotTight {
                instance,
                declared,
                tight,
            } => write!(
                f,
                "instance {instance}: box not tight (declared {declared}, tight {tight})"
            ),
            Violation::Confidence { instance, value } => {
                write!(f, "instance {instance}: confidence {value} outside [0, 1]")
            }
            Violation::EmptyGenus { instance } => {
                write!(f, "instance {instance}: empty genus name")
            }
        }
    }
}

/// Collects every invariant violation in `scene`.
pub fn validate_scene(scene: &QuadratScene) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let img = &scene.image;
    if img.width == 0 || img.height == 0 {
        out.push(Violation::ImageDimensions {
            width: img.width,
            height: img.height,
        });
    }
    if img.id.is_empty() {
        out.push(Violation::EmptyImageId);
    }
    let matches_image = |m: &RleMask| m.width() == img.width && m.height() == img.height;
    if let Some(roi) = &scene.roi {
        if !matches_image(roi) {
            out.push(Violation::RoiDimensionMismatch {
                width: roi.width(),
                height: roi.height(),
            });
        }
    }
    for (i, inst) in scene.instances.iter().enumerate() {
        if !matches_image(&inst.mask) {
            out.push(Violation::DimensionMismatch {
                instance: i,
                width: inst.mask.width(),
                height: inst.mask.height(),
            });
        }
        if !(0.0..=1.0).contains(&inst.confidence) {
            out.push(Violation::Confidence {
                instance: i,
                value: inst.confidence,
            });
        }
        if inst.genus.as_ref().is_some_and(|g| g.name.is_empty()) {
            out.push(Violation::EmptyGenus { instance: i });
        }
        match inst.mask.tight_bbox() {
            None => out.push(Violation::EmptyMask { instance: i }),
            Some(tight) if tight != inst.bbox => out.push(Violation::BoxNotTight {
                instance: i,
                declared: inst.bbox,
                tight,
            }),
            Some(_) => {}
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
