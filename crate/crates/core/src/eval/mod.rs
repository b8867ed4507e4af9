//! Detection and classification scoring, plus the record formats they read.

mod classification;
mod detection;

pub use classification::{
    class_report, confusion_matrix, f1_score, fixture_check, CellDelta, ClassMetrics,
    ClassReport, ConfusionMatrix, FixtureOutcome, Metric, PublishedRow, PublishedTable,
};
pub use detection::{
    average_precision, coco_thresholds, interpolated_ap, match_detections, mean_ap,
    precision_recall_curve, threshold_key, MatchResult, MeanApReport, PrPoint,
    PredictionMatch, ThresholdResult, RECALL_POINTS,
};

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BoundingBox;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("IoU threshold {0} outside (0, 1]")]
    IouThreshold(f64),
    #[error("no IoU thresholds given")]
    NoThresholds,
    #[error("undefined AP: no ground truth boxes")]
    UndefinedAp,
    #[error("unknown class {0:?}")]
    UnknownClass(String),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("matrix is not {0}x{0}")]
    NotSquare(usize),
    #[error("confusion matrix has no samples")]
    EmptyMatrix,
    #[error("line {line}: {message}")]
    Record { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub image_id: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBox {
    pub image_id: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// One line of a box file: `{image_id, class, box: [x0,y0,x1,y1], confidence?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub image_id: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

/// Parses newline-delimited box records; blank lines are skipped.
pub fn read_box_records(reader: impl BufRead) -> Result<Vec<BoxRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BoxRecord = serde_json::from_str(&line).map_err(|e| EvalError::Record {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_ground_truth(reader: impl BufRead) -> Result<Vec<GroundTruthBox>, EvalError> {
    Ok(read_box_records(reader)?
        .into_iter()
        .map(|r| GroundTruthBox {
            image_id: r.image_id,
            class: r.class,
            bbox: r.bbox,
        })
        .collect())
}

/// Like [`read_ground_truth`] but every record needs a confidence in [0, 1].
pub fn read_predictions(reader: impl BufRead) -> Result<Vec<PredictionBox>, EvalError> {
    let mut out = Vec::new();
    for (i, r) in read_box_records(reader)?.into_iter().enumerate() {
        let confidence = match r.confidence {
            Some(c) if (0.0..=1.0).contains(&c) => c,
            other => {
                return Err(EvalError::Record {
                    line: i + 1,
                    message: format!("prediction needs confidence in [0, 1], got {other:?}"),
                })
            }
        };
        out.push(PredictionBox {
            image_id: r.image_id,
            class: r.class,
            bbox: r.bbox,
            confidence,
        });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct PairRow {
    #[serde(rename = "true")]
    truth: String,
    predicted: String,
}

/// Reads a `true,predicted` CSV.
pub fn read_pairs(reader: impl std::io::Read) -> Result<Vec<(String, String)>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["true", "predicted"] {
        return Err(EvalError::Record {
            line: 1,
            message: format!("expected header true,predicted, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: PairRow = row?;
        out.push((row.truth, row.predicted));
    }
    Ok(out)
}

impl MeanApReport {
    pub fn to_text(&self) -> String {
        let width = self.classes.iter().map(|c| c.len()).max().unwrap_or(5).max(5);
        let keys: Vec<&String> = self.per_threshold.keys().collect();
        let mut out = format!("{:<width$}", "Class");
        for k in &keys {
            out += &format!("  {:>7}", format!("AP@{k}"));
        }
        out.push('\n');
        for c in &self.classes {
            out += &format!("{c:<width$}");
            for k in &keys {
                out += &format!("  {:>7.4}", self.per_threshold[*k].per_class[c]);
            }
            out.push('\n');
        }
        out += &format!("{:<width$}", "mAP");
        for k in &keys {
            out += &format!("  {:>7.4}", self.per_threshold[*k].map);
        }
        out.push('\n');
        if let Some(m) = self.map50 {
            out += &format!("mAP@0.5      {m:.4}\n");
        }
        if let Some(m) = self.map5095 {
            out += &format!("mAP@0.5:0.95 {m:.4}\n");
        }
        out
    }
}
