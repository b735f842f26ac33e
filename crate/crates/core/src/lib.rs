//! Point-tracking driven video object segmentation.
//!
//! Query points are sampled from a first-appearance mask, propagated through the
//! video by a pluggable point tracker, and used to prompt a pluggable promptable
//! segmenter on every frame. Around that loop sit VOS metrics, dataset drivers,
//! an interactive-annotation simulator and a session-based annotation service.

pub mod backend;
pub mod config;
pub mod datasets;
pub mod error;
pub mod interaction;
pub mod mask;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sampling;
pub mod service;
pub mod synthetic;
pub mod video;

pub use config::{PipelineConfig, PointSelection, ReinitVariant};
pub use error::{Error, Result};
pub use mask::BinaryMask;
pub use model::{Frame, Label, LabeledPoint, MaskPrediction, ObjectId, PriorHandle, TrajectoryBundle};
pub use video::VideoSequence;
