//! Quadrat analysis core: domain types, RLE mask algebra, ecological
//! metrics, detection / classification scoring and dataset statistics.

pub mod dataset;
pub mod eco;
pub mod eval;
pub mod export;
pub mod fixtures;
pub mod mask;
pub mod model;
pub mod taxonomy;

pub use eco::{QuadratReport, ResolvedScene};
pub use mask::{DisjointInstanceSet, RleMask};
pub use model::{BoundingBox, Detection, GenusLabel, ImageRef, InstanceMask, QuadratScene};
pub use taxonomy::{canonical_taxonomy, Taxonomy};
