//! Multi-scale hierarchical encoder/decoder networks for one-to-one image
//! relighting, together with the small reverse-mode autodiff engine, losses,
//! metrics, data pipeline and trainer they need.
//!
//! Everything runs on the CPU. Tensors are dense NCHW arrays; the element
//! type is generic so that training can use `f32` while gradient checks use
//! `f64`.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod tensor;
pub mod timing;
pub mod train;

pub use data::{load_image, load_samples, save_image, scan_dataset, synth_generate, Manifest, Sample, SynthConfig};
pub use error::{CheckpointError, Error, Result};
pub use graph::{Gradients, Graph, Var};
pub use kernels::{set_threads, threads};
pub use losses::{LossMode, LossWeights, PerceptualNet};
pub use metrics::{psnr, ssim_metric, MetricsReport, SampleMetrics};
pub use net::{infer, NetConfig, Params};
pub use tensor::{Element, Init, Shape, Tensor};
pub use train::{
    evaluate, train_two_stage, train_two_stage_on, AdamConfig, AdamState, Checkpoint, StepRecord, TrainConfig,
    TrainObserver, TrainOutcome,
};
