//! Run-length encoded binary masks and exact pixel-set algebra on them.
//!
//! Masks are encoded row-major (left-to-right, top-to-bottom) as alternating
//! background / foreground run lengths. The first run is always background and
//! may be zero-length, so a mask that starts with a foreground pixel is encoded
//! as `[0, n, ...]`.
//!
//! Every operation here works on the runs directly; no bitmap is materialised
//! except by the explicit [`RleMask::to_bitmap`] conversion.

mod ops;
mod resolve;
mod runs;

pub use ops::{
    box_iou, intersection_area, mask_area, multi_union_area, rasterize_box, union_area,
};
pub use resolve::{resolve_overlaps, DisjointInstanceSet};
pub(crate) use runs::Runs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BoundingBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaskError {
    #[error("mask dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("run lengths sum to {sum}, expected {expected} ({width}x{height})")]
    CountSum {
        sum: u64,
        expected: u64,
        width: u32,
        height: u32,
    },
    #[error("consecutive zero-length runs at position {0}")]
    ConsecutiveZeros(usize),
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },
    #[error("bitmap has {len} pixels, expected {expected}")]
    BitmapLength { len: usize, expected: u64 },
    #[error("empty rasterization: box {0} does not intersect the image")]
    EmptyRasterization(BoundingBox),
    #[error("invalid confidence {0}, expected a value in [0, 1]")]
    Confidence(f64),
}

/// A binary mask stored as row-major run lengths.
///
/// Construction always normalises to the canonical form: a leading background
/// run (possibly 0) followed by strictly positive runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRle", into = "RawRle")]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawRle {
    width: u32,
    height: u32,
    counts: Vec<u64>,
}

impl TryFrom<RawRle> for RleMask {
    type Error = MaskError;

    fn try_from(raw: RawRle) -> Result<Self, Self::Error> {
        RleMask::new(raw.width, raw.height, raw.counts)
    }
}

impl From<RleMask> for RawRle {
    fn from(mask: RleMask) -> Self {
        RawRle {
            width: mask.width,
            height: mask.height,
            counts: mask.counts,
        }
    }
}

fn check_dims(width: u32, height: u32) -> Result<u64, MaskError> {
    if width == 0 || height == 0 {
        return Err(MaskError::ZeroDimension { width, height });
    }
    Ok(u64::from(width) * u64::from(height))
}

impl RleMask {
    /// Builds a mask from raw counts, validating the sum and normalising runs.
    pub fn new(width: u32, height: u32, counts: Vec<u64>) -> Result<Self, MaskError> {
        let expected = check_dims(width, height)?;
        let sum: u64 = counts.iter().sum();
        if sum != expected {
            return Err(MaskError::CountSum {
                sum,
                expected,
                width,
                height,
            });
        }
        if let Some(pos) = counts
            .windows(2)
            .position(|w| w[0] == 0 && w[1] == 0)
        {
            return Err(MaskError::ConsecutiveZeros(pos));
        }
        let mut runs = Runs::default();
        let mut at = 0u64;
        for (i, &c) in counts.iter().enumerate() {
            if i % 2 == 1 {
                runs.push(at, at + c);
            }
            at += c;
        }
        Ok(Self::from_runs_unchecked(width, height, &runs))
    }

    /// An all-background mask.
    pub fn empty(width: u32, height: u32) -> Result<Self, MaskError> {
        let total = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            counts: vec![total],
        })
    }

    /// An all-foreground mask.
    pub fn full(width: u32, height: u32) -> Result<Self, MaskError> {
        let total = check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            counts: vec![0, total],
        })
    }

    pub fn from_bitmap(width: u32, height: u32, bits: &[bool]) -> Result<Self, MaskError> {
        let expected = check_dims(width, height)?;
        if bits.len() as u64 != expected {
            return Err(MaskError::BitmapLength {
                len: bits.len(),
                expected,
            });
        }
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u64;
        for &b in bits {
            if b != current {
                counts.push(run);
                run = 0;
                current = b;
            }
            run += 1;
        }
        counts.push(run);
        Ok(Self {
            width,
            height,
            counts,
        })
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity(self.pixel_count() as usize);
        for (i, &c) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(c as usize));
        }
        bits
    }

    pub(crate) fn from_runs_unchecked(width: u32, height: u32, runs: &Runs) -> Self {
        let total = u64::from(width) * u64::from(height);
        let mut counts = Vec::with_capacity(runs.len() * 2 + 1);
        let mut at = 0u64;
        for &(start, end) in runs.intervals() {
            counts.push(start - at);
            counts.push(end - start);
            at = end;
        }
        if at < total || counts.is_empty() {
            counts.push(total - at);
        }
        Self {
            width,
            height,
            counts,
        }
    }

    pub(crate) fn runs(&self) -> Runs {
        let mut runs = Runs::default();
        let mut at = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                runs.push(at, at + c);
            }
            at += c;
        }
        runs
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn same_dims(&self, other: &RleMask) -> Result<(), MaskError> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(MaskError::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            })
        }
    }

    pub fn intersect(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        self.same_dims(other)?;
        let runs = self.runs().intersect(&other.runs());
        Ok(Self::from_runs_unchecked(self.width, self.height, &runs))
    }

    pub fn union(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        self.same_dims(other)?;
        let runs = self.runs().union(&other.runs());
        Ok(Self::from_runs_unchecked(self.width, self.height, &runs))
    }

    /// Pixels of `self` that are not in `other`.
    pub fn subtract(&self, other: &RleMask) -> Result<RleMask, MaskError> {
        self.same_dims(other)?;
        let runs = self.runs().subtract(&other.runs());
        Ok(Self::from_runs_unchecked(self.width, self.height, &runs))
    }

    /// Tight half-open bounding box of the foreground, `None` when empty.
    pub fn tight_bbox(&self) -> Option<BoundingBox> {
        let w = u64::from(self.width);
        let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0u64, 0u64);
        for &(start, end) in self.runs().intervals() {
            let (first_row, last_row) = (start / w, (end - 1) / w);
            if first_row == last_row {
                x0 = x0.min(start % w);
                x1 = x1.max((end - 1) % w + 1);
            } else {
                x0 = 0;
                x1 = w;
            }
            y0 = y0.min(first_row);
            y1 = y1.max(last_row + 1);
        }
        (x1 > 0).then(|| BoundingBox {
            x_min: x0 as i64,
            y_min: y0 as i64,
            x_max: x1 as i64,
            y_max: y1 as i64,
        })
    }

    /// Restricts the mask to `region` and re-bases it onto a mask of the
    /// region's size. The region is clamped to the mask frame first.
    pub fn crop(&self, region: &BoundingBox) -> Result<RleMask, MaskError> {
        let clamped = region
            .clamp_to(self.width, self.height)
            .ok_or(MaskError::EmptyRasterization(*region))?;
        let (cx0, cy0) = (clamped.x_min as u64, clamped.y_min as u64);
        let (cx1, cy1) = (clamped.x_max as u64, clamped.y_max as u64);
        let (w, cw) = (u64::from(self.width), cx1 - cx0);
        let mut out = Runs::default();
        for &(start, end) in self.runs().intervals() {
            let first_row = (start / w).max(cy0);
            let last_row = ((end - 1) / w).min(cy1.saturating_sub(1));
            if first_row > last_row {
                continue;
            }
            for row in first_row..=last_row {
                let lo = start.max(row * w + cx0);
                let hi = end.min(row * w + cx1);
                if lo < hi {
                    let base = (row - cy0) * cw;
                    out.push(base + lo - row * w - cx0, base + hi - row * w - cx0);
                }
            }
        }
        Ok(Self::from_runs_unchecked(cw as u32, cy1 as u32 - cy0 as u32, &out))
    }
}
