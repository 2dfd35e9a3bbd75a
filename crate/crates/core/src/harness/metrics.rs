//! Voxel-level quality of a sampled latent against the scene.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{Latent, Scene};

/// Occupancy threshold applied to sampled latents.
pub const OCCUPANCY_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VoxelMetrics {
    pub iou: f64,
    pub mse: f64,
}

/// IoU of the thresholded latent with the ground truth (1 when both are
/// empty) and the mean squared error of the raw latent.
pub fn compute_metrics(latent: &Latent, scene: &Scene) -> Result<VoxelMetrics> {
    let values = latent.values();
    if values.len() != scene.q_count() {
        return Err(Error::Dimension {
            what: "latent",
            expected: scene.q_count(),
            actual: values.len(),
        });
    }
    let (mut inter, mut union, mut sq) = (0usize, 0usize, 0.0);
    for (&v, &gt) in values.iter().zip(scene.occupancy()) {
        let pred = v >= OCCUPANCY_THRESHOLD;
        inter += (pred && gt) as usize;
        union += (pred || gt) as usize;
        let target = if gt { 1.0 } else { 0.0 };
        sq += (v - target) * (v - target);
    }
    let iou = if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    };
    Ok(VoxelMetrics {
        iou,
        mse: sq / values.len() as f64,
    })
}
