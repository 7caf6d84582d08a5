#![allow(dead_code)]

use relight_core::data::synth::{east, generate_scene, north, NEUTRAL_GAIN, WARM_GAIN};
use relight_core::{Graph, Init, Result, Sample, Shape, Tensor, Var};

pub fn uniform(shape: [usize; 4], low: f64, high: f64, seed: u64) -> Tensor<f64> {
    Tensor::random(Shape(shape), Init::Uniform { low, high }, seed)
}

/// `sum(x ⊙ r)` for a fixed random `r`, turning any node into a scalar whose
/// gradient exercises every output element with a different weight.
pub fn project(g: &mut Graph<f64>, x: Var, seed: u64) -> Result<Var> {
    let r = uniform(g.shape(x).0, -1.0, 1.0, seed ^ 0x5eed);
    let r = g.constant(r);
    let p = g.mul(x, r)?;
    Ok(g.sum(p))
}

pub fn synthetic_pairs(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let scene = generate_scene(seed, i as u64, size);
            Sample {
                id: format!("scene_{i:04}"),
                input: scene.render(north(), NEUTRAL_GAIN),
                target: scene.render(east(), WARM_GAIN),
            }
        })
        .collect()
}
