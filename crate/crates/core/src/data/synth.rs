//! Procedural stand-in for a one-to-one relighting dataset.
//!
//! Each scene is a piecewise-constant albedo map over a smooth heightfield,
//! rendered twice with Lambertian shading plus ambient: once lit from North
//! with a neutral white light, once lit from East with a warm light.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image_io::save_image;
use super::manifest::{Manifest, SamplePair, INPUT_TAG, TARGET_TAG};
use crate::error::{Error, Result};
use crate::net::INPUT_MULTIPLE;
use crate::tensor::{Shape, Tensor};

/// Ambient fraction of albedo added to every pixel.
pub const AMBIENT: f64 = 0.1;
pub const NEUTRAL_GAIN: [f64; 3] = [1.0, 1.0, 1.0];
/// Fixed warm-light channel gains standing in for the lower color temperature.
pub const WARM_GAIN: [f64; 3] = [1.0, 0.85, 0.65];
/// Light elevation from the surface normal of a flat scene, in degrees.
pub const LIGHT_POLAR_DEG: f64 = 45.0;

/// Unit light vector for an azimuth measured clockwise from North (image up)
/// in the `x` right, `y` down, `z` toward the viewer frame.
pub fn light_direction(azimuth_deg: f64) -> [f64; 3] {
    let (polar, az) = (LIGHT_POLAR_DEG.to_radians(), azimuth_deg.to_radians());
    [polar.sin() * az.sin(), -polar.sin() * az.cos(), polar.cos()]
}

pub fn north() -> [f64; 3] {
    light_direction(0.0)
}

pub fn east() -> [f64; 3] {
    light_direction(90.0)
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `gain · (albedo · max(0, n·l) + AMBIENT · albedo)`, clamped to `[0,1]`.
pub fn shade(albedo: [f64; 3], normal: [f64; 3], light: [f64; 3], gain: [f64; 3]) -> [f64; 3] {
    let lambert = dot(normal, light).max(0.0);
    std::array::from_fn(|c| (gain[c] * albedo[c] * (lambert + AMBIENT)).clamp(0.0, 1.0))
}

/// Light-independent scene content.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub size: usize,
    /// Row-major RGB albedo.
    pub albedo: Vec<[f64; 3]>,
    /// Row-major unit normals.
    pub normals: Vec<[f64; 3]>,
}

struct Bump {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

enum Blob {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disk { cx: f64, cy: f64, r: f64 },
}

impl Blob {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Blob::Rect { x0, y0, x1, y1 } => (x0..x1).contains(&x) && (y0..y1).contains(&y),
            Blob::Disk { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
        }
    }
}

/// Scene `index` of the dataset drawn from `seed`.
pub fn generate_scene(seed: u64, index: u64, size: usize) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let s = size as f64;
    let color = |rng: &mut ChaCha8Rng, lo: f64| -> [f64; 3] { std::array::from_fn(|_| rng.random_range(lo..1.0)) };

    let base = color(&mut rng, 0.3);
    let n_blobs = rng.random_range(4..=8);
    let blobs: Vec<(Blob, [f64; 3])> = (0..n_blobs)
        .map(|_| {
            let blob = if rng.random_bool(0.5) {
                let (x0, y0) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
                let (w, h) = (rng.random_range(s / 8.0..s / 2.0), rng.random_range(s / 8.0..s / 2.0));
                Blob::Rect {
                    x0,
                    y0,
                    x1: x0 + w,
                    y1: y0 + h,
                }
            } else {
                Blob::Disk {
                    cx: rng.random_range(0.0..s),
                    cy: rng.random_range(0.0..s),
                    r: rng.random_range(s / 10.0..s / 4.0),
                }
            };
            (blob, color(&mut rng, 0.1))
        })
        .collect();

    let n_bumps = rng.random_range(3..=6);
    let bumps: Vec<Bump> = (0..n_bumps)
        .map(|_| {
            let sigma = rng.random_range(s / 10.0..s / 4.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Bump {
                cx: rng.random_range(0.0..s),
                cy: rng.random_range(0.0..s),
                sigma,
                amp: sign * sigma * rng.random_range(0.5..1.5),
            }
        })
        .collect();

    let mut albedo = Vec::with_capacity(size * size);
    let mut normals = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let a = blobs
                .iter()
                .rev()
                .find(|(b, _)| b.contains(px, py))
                .map_or(base, |(_, c)| *c);
            albedo.push(a);

            let (mut hx, mut hy) = (0.0, 0.0);
            for b in &bumps {
                let (dx, dy) = (px - b.cx, py - b.cy);
                let e = b.amp * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp();
                hx -= e * dx / (b.sigma * b.sigma);
                hy -= e * dy / (b.sigma * b.sigma);
            }
            let len = (hx * hx + hy * hy + 1.0).sqrt();
            normals.push([-hx / len, -hy / len, 1.0 / len]);
        }
    }
    Scene { size, albedo, normals }
}

fn to_tensor(size: usize, pixels: impl Iterator<Item = [f64; 3]>) -> Tensor<f32> {
    let mut data = vec![0.0f32; 3 * size * size];
    for (i, px) in pixels.enumerate() {
        for (c, v) in px.into_iter().enumerate() {
            data[c * size * size + i] = v as f32;
        }
    }
    Tensor::from_vec(Shape([1, 3, size, size]), data).expect("scene length")
}

impl Scene {
    pub fn render(&self, light: [f64; 3], gain: [f64; 3]) -> Tensor<f32> {
        to_tensor(
            self.size,
            self.albedo
                .iter()
                .zip(&self.normals)
                .map(|(&a, &n)| shade(a, n, light, gain)),
        )
    }

    pub fn render_albedo(&self) -> Tensor<f32> {
        to_tensor(self.size, self.albedo.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub scenes: usize,
    pub size: usize,
    pub split: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            scenes: 16,
            size: 64,
            split: "train".into(),
        }
    }
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:04}")
}

/// Render `cfg.scenes` input/target pairs under `root/<split>/<scene>/`.
pub fn synth_generate(root: impl AsRef<Path>, cfg: &SynthConfig) -> Result<Manifest> {
    if cfg.size == 0 || !cfg.size.is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::InvalidArgument(format!(
            "synthetic image size must be a positive multiple of {INPUT_MULTIPLE}, got {}",
            cfg.size
        )));
    }
    if cfg.scenes == 0 {
        return Err(Error::InvalidArgument("need at least one scene".into()));
    }
    let root = root.as_ref();
    let dir: PathBuf = if cfg.split.is_empty() {
        root.to_path_buf()
    } else {
        root.join(&cfg.split)
    };
    let mut pairs = Vec::with_capacity(cfg.scenes);
    for i in 0..cfg.scenes {
        let scene = generate_scene(cfg.seed, i as u64, cfg.size);
        let id = scene_id(i);
        let sdir = dir.join(&id);
        fs::create_dir_all(&sdir)?;
        let input_path = sdir.join(format!("{INPUT_TAG}.png"));
        let target_path = sdir.join(format!("{TARGET_TAG}.png"));
        save_image(&scene.render(north(), NEUTRAL_GAIN), &input_path)?;
        save_image(&scene.render(east(), WARM_GAIN), &target_path)?;
        pairs.push(SamplePair {
            scene_id: id,
            input_path,
            target_path,
        });
    }
    Ok(Manifest {
        split: cfg.split.clone(),
        root: root.to_path_buf(),
        pairs,
        skipped: 0,
    })
}
