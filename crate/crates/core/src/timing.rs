//! Wall-clock forward-pass timing for comparing network variants.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::net::{infer, NetConfig, Params, INPUT_MULTIPLE};
use crate::tensor::{Init, Shape, Tensor};

pub const WARMUPS: usize = 3;

/// Median of `samples`; the mean of the middle pair for even lengths.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    })
}

/// Seconds per forward pass of each timed repeat.
pub fn time_forward(params: &Params<f32>, size: usize, warmups: usize, repeats: usize) -> Result<Vec<f64>> {
    let x = bench_input(size)?;
    for _ in 0..warmups {
        infer(params, &x)?;
    }
    (0..repeats).map(|_| time_once(params, &x)).collect()
}

fn bench_input(size: usize) -> Result<Tensor<f32>> {
    if size == 0 || !size.is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::InvalidArgument(format!(
            "benchmark size must be a positive multiple of {INPUT_MULTIPLE}, got {size}"
        )));
    }
    Ok(Tensor::random(
        Shape([1, 3, size, size]),
        Init::Uniform { low: 0.0, high: 1.0 },
        0,
    ))
}

fn time_once(params: &Params<f32>, x: &Tensor<f32>) -> Result<f64> {
    let t = Instant::now();
    let out = infer(params, x)?;
    let secs = t.elapsed().as_secs_f64();
    std::hint::black_box(out);
    Ok(secs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackTiming {
    pub single: Vec<f64>,
    pub stacked: Vec<f64>,
}

impl StackTiming {
    pub fn single_median(&self) -> f64 {
        median(&self.single).unwrap_or(f64::NAN)
    }

    pub fn stacked_median(&self) -> f64 {
        median(&self.stacked).unwrap_or(f64::NAN)
    }

    /// Stacked over single median time.
    pub fn ratio(&self) -> f64 {
        self.stacked_median() / self.single_median()
    }
}

/// Time the single and stacked variants of `net` (its `stacks` is ignored)
/// on a `size × size` input. Runs alternate between the two so that slow
/// drift in machine load affects both alike.
pub fn compare_stacks(net: NetConfig, size: usize, warmups: usize, repeats: usize) -> Result<StackTiming> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let single = Params::init(net.with_stacks(1))?;
    let stacked = Params::init(net.with_stacks(2))?;
    let x = bench_input(size)?;
    for _ in 0..warmups {
        infer(&single, &x)?;
        infer(&stacked, &x)?;
    }
    let mut timing = StackTiming {
        single: Vec::with_capacity(repeats),
        stacked: Vec::with_capacity(repeats),
    };
    for _ in 0..repeats {
        timing.single.push(time_once(&single, &x)?);
        timing.stacked.push(time_once(&stacked, &x)?);
    }
    Ok(timing)
}
