//! Experiment protocols run on synthetic data: noise characterisation,
//! static accuracy, workspace sweeps, runtime scaling and latency.

pub mod accuracy;
pub mod gating;
pub mod latency;
pub mod noise;
pub mod runtime;
pub mod stats;
pub mod workspace;

use serde::{Deserialize, Serialize};

use crate::detection::{localize_markers, DetectedMarker, DetectionConfig};
use crate::error::Result;
use crate::geometry::CameraIntrinsics;
use crate::sensor::{render_frame_with, NoiseModel, RenderOptions, SceneSpec};

pub(crate) use crate::sensor::derive_seed as sub_seed;

/// Simulated camera plus detector: everything needed to turn a scene into
/// detections.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rig {
    pub intrinsics: CameraIntrinsics,
    pub noise: NoiseModel,
    pub detection: DetectionConfig,
    /// Round depth to whole millimetres.
    pub quantize: bool,
}

impl Default for Rig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default_sensor(),
            noise: NoiseModel::default(),
            detection: DetectionConfig::default(),
            quantize: true,
        }
    }
}

impl Rig {
    pub fn noiseless() -> Self {
        Self { noise: NoiseModel::noiseless(), quantize: false, ..Self::default() }
    }

    pub fn observe(&self, scene: &SceneSpec, seed: u64, timestamp: f64) -> Result<Vec<DetectedMarker>> {
        let opts = RenderOptions { timestamp, quantize: self.quantize, window: None };
        let frame = render_frame_with(scene, &self.intrinsics, &self.noise, seed, &opts)?;
        localize_markers(&frame, &self.detection)
    }
}
