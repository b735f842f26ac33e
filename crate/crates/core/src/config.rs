use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Query point selection method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSelection {
    Random,
    Kmedoids,
    ShiTomasi,
    Mixed,
}

/// Which reinitialization trigger to use, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReinitVariant {
    #[serde(rename = "off")]
    Off,
    /// Fixed horizon, objects synchronized.
    A,
    /// Frame whose area is closest to the mean non-empty area in the window.
    B,
    /// Earliest frame whose area is close to the initial area.
    C,
    /// Like C, but all objects must agree on the same frame.
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub psm: PointSelection,
    pub positive_per_mask: usize,
    pub negative_per_mask: usize,
    pub refinement_iterations: usize,
    pub patch_similarity_threshold: Option<f64>,
    pub reinit: ReinitVariant,
    pub horizon: usize,
    pub occlusion_threshold: f32,
    pub rng_seed: u64,
    /// Relative area band used by reinit variants C and D.
    pub area_similarity_band: f64,
    /// Prompt each object with the other objects' positive points as extra negatives.
    pub cross_object_negatives: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            psm: PointSelection::Kmedoids,
            positive_per_mask: 8,
            negative_per_mask: 1,
            refinement_iterations: 12,
            patch_similarity_threshold: None,
            reinit: ReinitVariant::Off,
            horizon: 8,
            occlusion_threshold: 0.5,
            rng_seed: 0,
            area_similarity_band: 0.25,
            cross_object_negatives: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.positive_per_mask < 1 {
            return Err(Error::invalid("positive_per_mask must be at least 1"));
        }
        if self.horizon < 1 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.occlusion_threshold) {
            return Err(Error::invalid("occlusion_threshold must lie in [0, 1]"));
        }
        if let Some(t) = self.patch_similarity_threshold {
            if !(t > 0.0) {
                return Err(Error::invalid("patch_similarity_threshold must be positive"));
            }
        }
        if self.reinit != ReinitVariant::Off && self.negative_per_mask < 1 {
            return Err(Error::invalid(
                "reinitialization requires at least one negative point per mask",
            ));
        }
        if !(self.area_similarity_band >= 0.0) {
            return Err(Error::invalid("area_similarity_band must be non-negative"));
        }
        Ok(())
    }

    /// Segmenter calls spent on one frame with at least one visible positive.
    pub fn calls_per_frame(&self) -> usize {
        2 + self.refinement_iterations
    }
}
