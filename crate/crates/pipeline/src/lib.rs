//! The detect → box-prompt → segment → classify cascade. Model stages are
//! reached through [`BackendSet`], built from descriptors by a
//! [`BackendRegistry`]; the resulting scenes go to `reef_core::eco`.

pub mod analyze;
pub mod backend;
pub mod config;
pub mod image;
pub mod mock;
pub mod protocol;
pub mod registry;
pub mod remote;

pub use analyze::{
    analyze_batch, analyze_quadrat, analyze_scene, generate_box_prompts, BatchResult,
    BatchSummary, PipelineError, QuadratFailure, QuadratInput,
};
pub use backend::{BackendError, BackendSet, Classification, Classifier, Detector, Segmenter, Stage};
pub use config::{ConfigError, CropMode, PipelineConfig};
pub use image::{ImageError, QuadratImage};
pub use mock::mock_backends;
pub use protocol::PROTOCOL_VERSION;
pub use registry::{BackendDescriptor, BackendFactory, BackendRegistry, BuildContext, Transport};
