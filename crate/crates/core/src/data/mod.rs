//! Image I/O, dataset indexing and the synthetic scene generator.

mod image_io;
mod manifest;
pub mod synth;

pub use image_io::{load_image, save_image, tensor_to_rgb};
pub use manifest::{scan_dataset, Manifest, SamplePair, INPUT_TAG, TARGET_TAG};
pub use synth::{synth_generate, SynthConfig};

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Element, Tensor};

/// Halve resolution by 2×2 mean pooling.
pub fn resize_half<T: Element>(image: &Tensor<T>) -> Result<Tensor<T>> {
    let s = image.shape();
    if !s.h().is_multiple_of(2) || !s.w().is_multiple_of(2) {
        return Err(Error::InvalidShape {
            op: "resize_half",
            msg: format!("H and W must be even, got {s}"),
        });
    }
    Ok(kernels::downsample_forward(image))
}

/// A decoded input/target pair.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
}

/// Decode every pair of `manifest`, optionally at half resolution.
pub fn load_samples(manifest: &Manifest, half: bool) -> Result<Vec<Sample>> {
    manifest
        .pairs
        .iter()
        .map(|p| {
            let mut input = load_image(&p.input_path)?;
            let mut target = load_image(&p.target_path)?;
            if input.shape() != target.shape() {
                return Err(Error::Dataset(format!(
                    "scene {}: input {} vs target {}",
                    p.scene_id,
                    input.shape(),
                    target.shape()
                )));
            }
            if half {
                input = resize_half(&input)?;
                target = resize_half(&target)?;
            }
            Ok(Sample {
                id: p.scene_id.clone(),
                input,
                target,
            })
        })
        .collect()
}
