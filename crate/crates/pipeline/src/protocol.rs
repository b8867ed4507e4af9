//! Backend wire protocol v1: one JSON object per line (stdio) or per POST
//! body (HTTP).

use std::io::{self, BufRead, Write};

use reef_core::{BoundingBox, Detection, RleMask};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{BackendError, BackendSet, Classification};
use crate::image::QuadratImage;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Detect,
    Segment,
    Classify,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub png_base64: String,
}

impl WireImage {
    pub fn from_image(image: &QuadratImage) -> Self {
        Self {
            id: image.id().to_string(),
            width: image.width(),
            height: image.height(),
            png_base64: image.png_base64().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub request_id: String,
    pub op: Op,
    pub protocol_version: u32,
    pub image: WireImage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<BoundingBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
}

impl Request {
    pub fn detect(request_id: String, image: &QuadratImage) -> Self {
        Self::new(request_id, Op::Detect, image)
    }

    pub fn segment(request_id: String, image: &QuadratImage, prompts: &[BoundingBox]) -> Self {
        Self {
            prompts: Some(prompts.to_vec()),
            ..Self::new(request_id, Op::Segment, image)
        }
    }

    pub fn classify(request_id: String, image: &QuadratImage, mask: &RleMask) -> Self {
        Self {
            mask: Some(mask.clone()),
            ..Self::new(request_id, Op::Classify, image)
        }
    }

    fn new(request_id: String, op: Op, image: &QuadratImage) -> Self {
        Self {
            request_id,
            op,
            protocol_version: PROTOCOL_VERSION,
            image: WireImage::from_image(image),
            prompts: None,
            mask: None,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serialization is infallible")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectBody {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentBody {
    pub masks: Vec<RleMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireError {
    pub code: String,
    pub message: String,
}

/// Checks the id echo and error field, then decodes the op-specific body.
pub fn parse_response<T: DeserializeOwned>(line: &str, request_id: &str) -> Result<T, BackendError> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| BackendError::protocol(format!("response is not JSON: {e}"), line))?;
    let Some(obj) = value.as_object() else {
        return Err(BackendError::protocol("response is not a JSON object", line));
    };
    match obj.get("request_id").and_then(Value::as_str) {
        Some(id) if id == request_id => {}
        Some(id) => {
            return Err(BackendError::protocol(
                format!("response id {id:?} does not match request {request_id:?}"),
                line,
            ))
        }
        None => return Err(BackendError::protocol("response has no request_id", line)),
    }
    if let Some(err) = obj.get("error") {
        let err: WireError = serde_json::from_value(err.clone())
            .map_err(|e| BackendError::protocol(format!("malformed error object: {e}"), line))?;
        return Err(BackendError::Remote {
            code: err.code,
            message: err.message,
        });
    }
    serde_json::from_value(value).map_err(|e| BackendError::protocol(e.to_string(), line))
}

pub fn check_detections(dets: &[Detection], line: &str) -> Result<(), BackendError> {
    match dets.iter().find(|d| !(0.0..=1.0).contains(&d.confidence)) {
        Some(d) => Err(BackendError::protocol(
            format!("detection confidence {} outside [0, 1]", d.confidence),
            line,
        )),
        None => Ok(()),
    }
}

pub fn check_masks(
    masks: &[RleMask],
    prompts: usize,
    image: &QuadratImage,
    line: &str,
) -> Result<(), BackendError> {
    if masks.len() != prompts {
        return Err(BackendError::protocol(
            format!("{} masks returned for {prompts} prompts", masks.len()),
            line,
        ));
    }
    for m in masks {
        if (m.width(), m.height()) != (image.width(), image.height()) {
            return Err(BackendError::protocol(
                format!(
                    "mask is {}x{} but the image is {}x{}",
                    m.width(),
                    m.height(),
                    image.width(),
                    image.height()
                ),
                line,
            ));
        }
    }
    Ok(())
}

pub fn check_classification(c: &Classification, line: &str) -> Result<(), BackendError> {
    if c.genus.trim().is_empty() {
        return Err(BackendError::protocol("empty genus", line));
    }
    if !(0.0..=1.0).contains(&c.confidence) {
        return Err(BackendError::protocol(
            format!("classification confidence {} outside [0, 1]", c.confidence),
            line,
        ));
    }
    Ok(())
}

fn error_line(request_id: &str, code: &str, message: impl Into<String>) -> String {
    serde_json::json!({
        "request_id": request_id,
        "error": { "code": code, "message": message.into() },
    })
    .to_string()
}

fn body_line<T: Serialize>(request_id: &str, body: &T) -> String {
    let mut v = serde_json::to_value(body).expect("body serialization is infallible");
    let obj = v.as_object_mut().expect("bodies are objects");
    obj.insert("request_id".into(), Value::String(request_id.to_string()));
    serde_json::to_string(&v).expect("value serialization is infallible")
}

/// Answers one request line using `backends`. Never fails: every problem
/// becomes an error response.
pub fn handle_line(line: &str, backends: &BackendSet) -> String {
    let value: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_line("", "malformed", format!("not JSON: {e}")),
    };
    let request_id = value
        .get("request_id")
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    match value.get("protocol_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(PROTOCOL_VERSION) => {}
        other => {
            return error_line(
                &request_id,
                "version",
                format!("unsupported protocol_version {other:?}, expected {PROTOCOL_VERSION}"),
            )
        }
    }
    let op = value.get("op").cloned().unwrap_or(Value::Null);
    if serde_json::from_value::<Op>(op.clone()).is_err() {
        return error_line(&request_id, "unsupported_op", format!("unsupported op {op}"));
    }
    let req: Request = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return error_line(&request_id, "malformed", e.to_string()),
    };
    let image = match QuadratImage::from_wire(
        req.image.id.clone(),
        req.image.width,
        req.image.height,
        req.image.png_base64.clone(),
    ) {
        Ok(i) => i,
        Err(e) => return error_line(&request_id, "malformed", e.to_string()),
    };
    let remote = |e: BackendError| match e {
        BackendError::Remote { code, message } => error_line(&request_id, &code, message),
        other => error_line(&request_id, "internal", other.to_string()),
    };
    match req.op {
        Op::Detect => match backends.detector.detect(&image) {
            Ok(detections) => body_line(&request_id, &DetectBody { detections }),
            Err(e) => remote(e),
        },
        Op::Segment => {
            let prompts = req.prompts.unwrap_or_default();
            match backends.segmenter.segment(&image, &prompts) {
                Ok(masks) => body_line(&request_id, &SegmentBody { masks }),
                Err(e) => remote(e),
            }
        }
        Op::Classify => {
            let Some(mask) = req.mask else {
                return error_line(&request_id, "malformed", "classify request without mask");
            };
            if (mask.width(), mask.height()) != (image.width(), image.height()) {
                return error_line(&request_id, "malformed", "mask and image dimensions differ");
            }
            match backends.classifier.classify(&image, &mask) {
                Ok(c) => body_line(&request_id, &c),
                Err(e) => remote(e),
            }
        }
    }
}

/// Request loop over a line stream: one response line per non-blank
/// request line, flushed immediately, until EOF.
pub fn serve(input: impl BufRead, mut output: impl Write, backends: &BackendSet) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(&line, backends);
        writeln!(output, "{response}")?;
        output.flush()?;
    }
    Ok(())
}
