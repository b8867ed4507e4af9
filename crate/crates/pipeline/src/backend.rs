//! Stage traits implemented by every backend, whatever its transport.

use std::fmt;
use std::sync::{Arc, Mutex};

use reef_core::{BoundingBox, Detection, RleMask};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::QuadratImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detect,
    Segment,
    Classify,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Detect => "detect",
            Stage::Segment => "segment",
            Stage::Classify => "classify",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    /// The backend could not be reached or went away mid-request.
    #[error("transport failure: {0}")]
    Transport(String),
    /// The backend answered with something that is not a valid response.
    #[error("protocol error: {message}; payload: {excerpt}")]
    Protocol { message: String, excerpt: String },
    /// The backend answered with an error response.
    #[error("backend error [{code}]: {message}")]
    Remote { code: String, message: String },
}

impl BackendError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }

    pub(crate) fn protocol(message: impl Into<String>, payload: &str) -> Self {
        BackendError::Protocol {
            message: message.into(),
            excerpt: excerpt(payload),
        }
    }
}

const EXCERPT_CHARS: usize = 160;

pub(crate) fn excerpt(payload: &str) -> String {
    let mut out: String = payload.trim_end().chars().take(EXCERPT_CHARS).collect();
    if payload.trim_end().chars().count() > EXCERPT_CHARS {
        out.push('…');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternate {
    pub genus: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub genus: String,
    pub confidence: f64,
    #[serde(default)]
    pub alternates: Vec<Alternate>,
}

pub trait Detector: Send + Sync {
    fn detect(&self, image: &QuadratImage) -> Result<Vec<Detection>, BackendError>;
}

pub trait Segmenter: Send + Sync {
    /// One mask per prompt, in prompt order.
    fn segment(
        &self,
        image: &QuadratImage,
        prompts: &[BoundingBox],
    ) -> Result<Vec<RleMask>, BackendError>;
}

pub trait Classifier: Send + Sync {
    fn classify(&self, image: &QuadratImage, mask: &RleMask)
        -> Result<Classification, BackendError>;
}

/// The three stages a pipeline run needs.
#[derive(Clone)]
pub struct BackendSet {
    pub detector: Arc<dyn Detector>,
    pub segmenter: Arc<dyn Segmenter>,
    pub classifier: Arc<dyn Classifier>,
}

impl fmt::Debug for BackendSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendSet").finish_non_exhaustive()
    }
}

/// Serializes calls into a backend that cannot take interleaved requests.
pub struct Exclusive<T: ?Sized> {
    lock: Mutex<()>,
    inner: Arc<T>,
}

impl<T: ?Sized> Exclusive<T> {
    pub fn new(inner: Arc<T>) -> Self {
        Self {
            lock: Mutex::new(()),
            inner,
        }
    }

    fn guard(&self) -> std::sync::MutexGuard<'_, ()> {
        // A panic in another caller leaves no state behind the lock.
        self.lock.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl<T: Detector + ?Sized> Detector for Exclusive<T> {
    fn detect(&self, image: &QuadratImage) -> Result<Vec<Detection>, BackendError> {
        let _g = self.guard();
        self.inner.detect(image)
    }
}

impl<T: Segmenter + ?Sized> Segmenter for Exclusive<T> {
    fn segment(
        &self,
        image: &QuadratImage,
        prompts: &[BoundingBox],
    ) -> Result<Vec<RleMask>, BackendError> {
        let _g = self.guard();
        self.inner.segment(image, prompts)
    }
}

impl<T: Classifier + ?Sized> Classifier for Exclusive<T> {
    fn classify(
        &self,
        image: &QuadratImage,
        mask: &RleMask,
    ) -> Result<Classification, BackendError> {
        let _g = self.guard();
        self.inner.classify(image, mask)
    }
}
