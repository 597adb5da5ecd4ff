//! Toolkit for building SAR/optical detection datasets and ensembling detector outputs.
//!
//! The crate covers the non-neural half of an optical-to-SAR transfer workflow:
//!
//! - [`composites`]: Sentinel-1 VH/VV/ratio and Sentinel-2 true colour composites,
//!   patch extraction and box-preserving augmentation.
//! - [`datasets`]: COCO ground truth and results ingestion, seeded train/val
//!   splitting and checkpoint sweeps.
//! - [`metrics`]: COCO-style AP/AR evaluation.
//! - [`wbf`]: Weighted Boxes Fusion over several detectors.
//! - [`tuner`]: seeded search over fusion weights and thresholds.

pub mod composites;
pub mod datasets;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod tuner;
pub mod wbf;

pub use error::{Error, Result};
pub use geometry::{Annotation, BBox, Detection};
