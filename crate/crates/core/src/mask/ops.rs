use super::{MaskError, RleMask, Runs};
use crate::model::BoundingBox;

/// Rasterizes `bbox ∩ image` into a `width`×`height` mask.
pub fn rasterize_box(bbox: &BoundingBox, width: u32, height: u32) -> Result<RleMask, MaskError> {
    RleMask::empty(width, height)?;
    let clamped = bbox
        .clamp_to(width, height)
        .ok_or(MaskError::EmptyRasterization(*bbox))?;
    let w = u64::from(width);
    let mut runs = Runs::default();
    for y in clamped.y_min as u64..clamped.y_max as u64 {
        runs.push(y * w + clamped.x_min as u64, y * w + clamped.x_max as u64);
    }
    Ok(RleMask::from_runs_unchecked(width, height, &runs))
}

pub fn mask_area(mask: &RleMask) -> u64 {
    mask.area()
}

pub fn intersection_area(a: &RleMask, b: &RleMask) -> Result<u64, MaskError> {
    a.same_dims(b)?;
    Ok(a.runs().intersection_area(&b.runs()))
}

pub fn union_area(a: &RleMask, b: &RleMask) -> Result<u64, MaskError> {
    let inter = intersection_area(a, b)?;
    Ok(a.area() + b.area() - inter)
}

/// Box IoU under the half-open pixel convention.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Number of pixels covered by at least one mask.
pub fn multi_union_area(masks: &[RleMask]) -> Result<u64, MaskError> {
    let Some(first) = masks.first() else {
        return Ok(0);
    };
    for m in &masks[1..] {
        first.same_dims(m)?;
    }
    let runs: Vec<Runs> = masks.iter().map(RleMask::runs).collect();
    Ok(Runs::union_all(&runs).area())
}
