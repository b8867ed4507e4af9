//! Detection scoring: greedy per-class matching, 101-point interpolated AP,
//! and mAP over an IoU threshold family.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{EvalError, GroundTruthBox, PredictionBox};
use crate::mask::box_iou;

/// Number of recall sample points used by [`average_precision`].
pub const RECALL_POINTS: usize = 101;

/// `{0.50, 0.55, …, 0.95}`.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

fn check_threshold(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::IouThreshold(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionMatch {
    /// Index into the caller's prediction slice.
    pub prediction: usize,
    pub confidence: f64,
    pub true_positive: bool,
    /// Index into the caller's ground-truth slice.
    pub ground_truth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    /// Predictions in descending confidence order (stable on ties).
    pub ranked: Vec<PredictionMatch>,
    pub ground_truths: usize,
    pub missed_ground_truths: usize,
}

impl MatchResult {
    pub fn true_positives(&self) -> usize {
        self.ranked.iter().filter(|m| m.true_positive).count()
    }
}

/// Ranks predictions by confidence, then lets each one claim the unmatched
/// ground truth of the same image and class with the highest IoU, provided
/// the IoU is at least `iou_threshold`. IoU ties go to the lower GT index.
pub fn match_detections(
    preds: &[PredictionBox],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<MatchResult, EvalError> {
    check_threshold(iou_threshold)?;
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].confidence.total_cmp(&preds[a].confidence));

    let mut by_key: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        by_key
            .entry((g.image_id.as_str(), g.class.as_str()))
            .or_default()
            .push(i);
    }
    let mut taken = vec![false; gts.len()];
    let mut ranked = Vec::with_capacity(preds.len());
    for idx in order {
        let p = &preds[idx];
        let mut best: Option<(usize, f64)> = None;
        if let Some(candidates) = by_key.get(&(p.image_id.as_str(), p.class.as_str())) {
            for &g in candidates {
                if taken[g] {
                    continue;
                }
                let iou = box_iou(&p.bbox, &gts[g].bbox);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
        }
        ranked.push(PredictionMatch {
            prediction: idx,
            confidence: p.confidence,
            true_positive: best.is_some(),
            ground_truth: best.map(|(g, _)| g),
        });
    }
    Ok(MatchResult {
        ranked,
        ground_truths: gts.len(),
        missed_ground_truths: taken.iter().filter(|t| !**t).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub true_positives: usize,
    pub false_positives: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Cumulative precision/recall after each ranked prediction.
pub fn precision_recall_curve(matches: &MatchResult) -> Vec<PrPoint> {
    let n_gt = matches.ground_truths;
    let (mut tp, mut fp) = (0usize, 0usize);
    matches
        .ranked
        .iter()
        .map(|m| {
            if m.true_positive {
                tp += 1;
            } else {
                fp += 1;
            }
            PrPoint {
                true_positives: tp,
                false_positives: fp,
                precision: tp as f64 / (tp + fp) as f64,
                recall: if n_gt == 0 { 0.0 } else { tp as f64 / n_gt as f64 },
            }
        })
        .collect()
}

/// Mean of interpolated precision (max precision at recall ≥ r) over the
/// recall points r = 0.00, 0.01, …, 1.00.
pub fn interpolated_ap(curve: &[PrPoint], ground_truths: usize) -> f64 {
    // Suffix maxima give the interpolated precision at every curve point.
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut sum = 0.0;
    let mut at = 0;
    for r in 0..RECALL_POINTS {
        // recall >= r/100  <=>  tp * 100 >= r * n_gt, in exact integers
        while at < curve.len() && curve[at].true_positives * 100 < r * ground_truths {
            at += 1;
        }
        if at < curve.len() {
            sum += envelope[at];
        }
    }
    sum / RECALL_POINTS as f64
}

/// 101-point interpolated AP of `preds` against `gts`.
pub fn average_precision(
    preds: &[PredictionBox],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<f64, EvalError> {
    check_threshold(iou_threshold)?;
    if gts.is_empty() {
        return Err(EvalError::UndefinedAp);
    }
    let matches = match_detections(preds, gts, iou_threshold)?;
    Ok(interpolated_ap(&precision_recall_curve(&matches), gts.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub iou_threshold: f64,
    pub map: f64,
    pub per_class: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanApReport {
    /// Keyed by the threshold printed to two decimals, e.g. `"0.50"`.
    pub per_threshold: BTreeMap<String, ThresholdResult>,
    pub map50: Option<f64>,
    /// Mean over the ten COCO thresholds when every one was evaluated.
    pub map5095: Option<f64>,
    /// Mean over all evaluated thresholds.
    pub map_mean: f64,
    pub classes: Vec<String>,
}

pub fn threshold_key(t: f64) -> String {
    format!("{t:.2}")
}

/// mAP per threshold (classes without ground truth are excluded), plus
/// mAP@0.5 and mAP@0.5:0.95 when those thresholds are present.
pub fn mean_ap(
    preds: &[PredictionBox],
    gts: &[GroundTruthBox],
    thresholds: &[f64],
) -> Result<MeanApReport, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::NoThresholds);
    }
    for &t in thresholds {
        check_threshold(t)?;
    }
    let classes: BTreeSet<&str> = gts.iter().map(|g| g.class.as_str()).collect();
    if classes.is_empty() {
        return Err(EvalError::UndefinedAp);
    }
    let grouped: Vec<(&str, Vec<PredictionBox>, Vec<GroundTruthBox>)> = classes
        .iter()
        .map(|&c| {
            let p = preds.iter().filter(|p| p.class == c).cloned().collect();
            let g = gts.iter().filter(|g| g.class == c).cloned().collect();
            (c, p, g)
        })
        .collect();

    let mut per_threshold = BTreeMap::new();
    let mut by_value = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut per_class = BTreeMap::new();
        for (c, p, g) in &grouped {
            per_class.insert(c.to_string(), average_precision(p, g, t)?);
        }
        let map = per_class.values().sum::<f64>() / per_class.len() as f64;
        by_value.push((t, map));
        per_threshold.insert(
            threshold_key(t),
            ThresholdResult {
                iou_threshold: t,
                map,
                per_class,
            },
        );
    }
    let lookup = |t: f64| by_value.iter().find(|(v, _)| (v - t).abs() < 1e-9).map(|x| x.1);
    let coco: Option<Vec<f64>> = coco_thresholds().into_iter().map(lookup).collect();
    Ok(MeanApReport {
        map50: lookup(0.5),
        map5095: coco.map(|v| v.iter().sum::<f64>() / v.len() as f64),
        map_mean: by_value.iter().map(|x| x.1).sum::<f64>() / by_value.len() as f64,
        per_threshold,
        classes: classes.into_iter().map(String::from).collect(),
    })
}
