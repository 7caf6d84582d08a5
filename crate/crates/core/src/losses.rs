//! Differentiable training objectives.
//!
//! All losses take graph nodes and return a scalar node. The combined
//! objective is `λ1·L1 + λ2·SSIM + λ3·Lp + λ4·Ltv` where SSIM enters as the
//! raw similarity, so the negative default `λ2` rewards structural
//! agreement.

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Axis, Graph, Var};
use crate::tensor::{Element, Init, Shape, Tensor};

/// Coefficients of the combined objective plus the Sobel mixing weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub perceptual: f64,
    pub tv: f64,
    pub sobel_mix: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l1: 1.0,
            ssim: -5e-3,
            perceptual: 0.006,
            tv: 2e-8,
            sobel_mix: 0.1,
        }
    }
}

/// Gaussian-window SSIM settings for unit dynamic range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

/// Normalized `window×window` Gaussian, row-major.
pub fn gaussian_window(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window as f64 - 1.0) / 2.0;
    let g1: Vec<f64> = (0..window)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g1.iter().sum();
    let g1: Vec<f64> = g1.iter().map(|v| v / total).collect();
    g1.iter().flat_map(|a| g1.iter().map(move |b| a * b)).collect()
}

fn check_same(g: &Graph<impl Element>, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa != sb {
        return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
    }
    Ok(())
}

/// Mean absolute error.
pub fn l1_loss<T: Element>(g: &mut Graph<T>, pred: Var, tgt: Var) -> Result<Var> {
    check_same(g, "l1_loss", pred, tgt)?;
    let d = g.sub(pred, tgt)?;
    let a = g.abs(d);
    Ok(g.mean(a))
}

/// Mean squared error.
pub fn l2_loss<T: Element>(g: &mut Graph<T>, pred: Var, tgt: Var) -> Result<Var> {
    check_same(g, "l2_loss", pred, tgt)?;
    let d = g.sub(pred, tgt)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean(sq))
}

/// Mean SSIM over all valid (unpadded) window positions, channels and batch
/// items. This is a similarity: 1 for identical images.
pub fn ssim_value<T: Element>(g: &mut Graph<T>, x: Var, y: Var, params: &SsimParams) -> Result<Var> {
    check_same(g, "ssim", x, y)?;
    let s = g.shape(x);
    if s.h() < params.window || s.w() < params.window {
        return Err(Error::InvalidShape {
            op: "ssim",
            msg: format!("image {s} smaller than the {}px window", params.window),
        });
    }
    let k = params.window;
    let kernel: Rc<[T]> = gaussian_window(k, params.sigma).into_iter().map(T::from_f64).collect();

    let mu_x = g.filter2d(x, kernel.clone(), k, 0)?;
    let mu_y = g.filter2d(y, kernel.clone(), k, 0)?;
    let xx = g.mul(x, x)?;
    let yy = g.mul(y, y)?;
    let xy = g.mul(x, y)?;
    let e_xx = g.filter2d(xx, kernel.clone(), k, 0)?;
    let e_yy = g.filter2d(yy, kernel.clone(), k, 0)?;
    let e_xy = g.filter2d(xy, kernel, k, 0)?;

    let mu_xx = g.mul(mu_x, mu_x)?;
    let mu_yy = g.mul(mu_y, mu_y)?;
    let mu_xy = g.mul(mu_x, mu_y)?;
    let var_x = g.sub(e_xx, mu_xx)?;
    let var_y = g.sub(e_yy, mu_yy)?;
    let cov = g.sub(e_xy, mu_xy)?;

    let lum_num = g.scale(mu_xy, 2.0);
    let lum_num = g.add_scalar(lum_num, params.c1);
    let cs_num = g.scale(cov, 2.0);
    let cs_num = g.add_scalar(cs_num, params.c2);
    let lum_den = g.add(mu_xx, mu_yy)?;
    let lum_den = g.add_scalar(lum_den, params.c1);
    let cs_den = g.add(var_x, var_y)?;
    let cs_den = g.add_scalar(cs_den, params.c2);

    let num = g.mul(lum_num, cs_num)?;
    let den = g.mul(lum_den, cs_den)?;
    let map = g.div(num, den)?;
    Ok(g.mean(map))
}

/// Squared-difference total variation normalized by element count.
pub fn tv_loss<T: Element>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x);
    if s.h() < 2 || s.w() < 2 {
        return Err(Error::InvalidShape {
            op: "tv_loss",
            msg: format!("need H, W >= 2, got {s}"),
        });
    }
    let dh = g.diff(x, Axis::Horizontal)?;
    let dv = g.diff(x, Axis::Vertical)?;
    let sh = g.mul(dh, dh)?;
    let sv = g.mul(dv, dv)?;
    let sh = g.sum(sh);
    let sv = g.sum(sv);
    let total = g.add(sh, sv)?;
    Ok(g.scale(total, 1.0 / s.numel() as f64))
}

/// Frozen random feature extractor used for the perceptual distance:
/// three `k3 s2 p1` convolutions `3→16→32→64`, each followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptualNet {
    layers: Vec<(Tensor<f64>, Tensor<f64>)>,
}

impl PerceptualNet {
    pub const SEED: u64 = 0;
    pub const CHANNELS: [usize; 4] = [3, 16, 32, 64];

    pub fn new() -> Self {
        Self::with_seed(Self::SEED)
    }

    pub fn with_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = Self::CHANNELS
            .windows(2)
            .map(|io| {
                let (cin, cout) = (io[0], io[1]);
                let bound = (6.0 / (cin * 9) as f64).sqrt();
                let w = Tensor::random_with(
                    Shape([cout, cin, 3, 3]),
                    Init::Uniform {
                        low: -bound,
                        high: bound,
                    },
                    &mut rng,
                );
                (w, Tensor::zeros(Shape([1, cout, 1, 1])))
            })
            .collect();
        PerceptualNet { layers }
    }

    pub fn layers(&self) -> &[(Tensor<f64>, Tensor<f64>)] {
        &self.layers
    }

    /// Feature maps after each layer.
    pub fn features<T: Element>(&self, g: &mut Graph<T>, x: Var) -> Result<Vec<Var>> {
        let mut h = x;
        let mut out = Vec::with_capacity(self.layers.len());
        for (w, b) in &self.layers {
            let w = g.constant(w.cast());
            let b = g.constant(b.cast());
            let y = g.conv2d(h, w, Some(b), 2, 1)?;
            h = g.relu(y);
            out.push(h);
        }
        Ok(out)
    }
}

impl Default for PerceptualNet {
    fn default() -> Self {
        Self::new()
    }
}

/// Sum over extractor layers of the mean squared feature difference.
pub fn perceptual_loss<T: Element>(g: &mut Graph<T>, pred: Var, tgt: Var, net: &PerceptualNet) -> Result<Var> {
    check_same(g, "perceptual_loss", pred, tgt)?;
    let s = g.shape(pred);
    if !s.h().is_multiple_of(8) || !s.w().is_multiple_of(8) {
        return Err(Error::InvalidShape {
            op: "perceptual_loss",
            msg: format!("H and W must be divisible by 8, got {s}"),
        });
    }
    let fp = net.features(g, pred)?;
    // Target features never need a gradient.
    let tgt_const = g.constant(g.value(tgt).clone());
    let ft = net.features(g, tgt_const)?;
    let mut total: Option<Var> = None;
    for (a, b) in fp.into_iter().zip(ft) {
        let term = l2_loss(g, a, b)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("extractor has layers"))
}

/// Directional Sobel kernels at 0°, 45°, 90° and 135°.
pub const SOBEL_KERNELS: [[f64; 9]; 4] = [
    [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0],
    [0.0, 1.0, 2.0, -1.0, 0.0, 1.0, -2.0, -1.0, 0.0],
    [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0],
    [-2.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 2.0],
];

/// Edge maps of `x` for each kernel of [`SOBEL_KERNELS`] over valid window
/// positions, so flat regions (including borders) respond with exactly 0.
pub fn sobel_edges<T: Element>(g: &mut Graph<T>, x: Var) -> Result<Vec<Var>> {
    SOBEL_KERNELS
        .iter()
        .map(|k| {
            let kernel: Rc<[T]> = k.iter().map(|&v| T::from_f64(v)).collect();
            g.filter2d(x, kernel, 3, 0)
        })
        .collect()
}

/// Mean over the four directions of the L1 distance between edge maps.
pub fn advanced_sobel_loss<T: Element>(g: &mut Graph<T>, pred: Var, tgt: Var) -> Result<Var> {
    check_same(g, "advanced_sobel_loss", pred, tgt)?;
    let ep = sobel_edges(g, pred)?;
    let et = sobel_edges(g, tgt)?;
    let mut total: Option<Var> = None;
    for (a, b) in ep.into_iter().zip(et) {
        let term = l1_loss(g, a, b)?;
        total = Some(match total {
            Some(t) => g.add(t, term)?,
            None => term,
        });
    }
    Ok(g.scale(total.expect("four kernels"), 0.25))
}

/// One weighted component of a [`Loss`].
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub name: &'static str,
    pub weight: f64,
    pub value: Var,
}

/// A scalar objective together with its weighted parts.
#[derive(Debug, Clone)]
pub struct Loss {
    pub total: Var,
    pub terms: Vec<Term>,
}

impl Loss {
    /// `(name, weight, raw value)` of each term.
    pub fn breakdown<T: Element>(&self, g: &Graph<T>) -> Result<Vec<(&'static str, f64, f64)>> {
        self.terms
            .iter()
            .map(|t| Ok((t.name, t.weight, g.scalar(t.value)?)))
            .collect()
    }
}

fn weighted_sum<T: Element>(g: &mut Graph<T>, terms: Vec<Term>) -> Result<Loss> {
    let mut total: Option<Var> = None;
    for t in &terms {
        let scaled = g.scale(t.value, t.weight);
        total = Some(match total {
            Some(acc) => g.add(acc, scaled)?,
            None => scaled,
        });
    }
    Ok(Loss {
        total: total.expect("at least one term"),
        terms,
    })
}

/// `λ1·L1 + λ2·SSIM + λ3·Lp + λ4·Ltv`.
pub fn combined_loss<T: Element>(
    g: &mut Graph<T>,
    pred: Var,
    tgt: Var,
    w: &LossWeights,
    net: &PerceptualNet,
) -> Result<Loss> {
    let l1 = l1_loss(g, pred, tgt)?;
    let ssim = ssim_value(g, pred, tgt, &SsimParams::default())?;
    let lp = perceptual_loss(g, pred, tgt, net)?;
    let tv = tv_loss(g, pred)?;
    weighted_sum(
        g,
        vec![
            Term {
                name: "l1",
                weight: w.l1,
                value: l1,
            },
            Term {
                name: "ssim",
                weight: w.ssim,
                value: ssim,
            },
            Term {
                name: "perceptual",
                weight: w.perceptual,
                value: lp,
            },
            Term {
                name: "tv",
                weight: w.tv,
                value: tv,
            },
        ],
    )
}

/// `L2 + w_s·L_Sobel*`.
pub fn combined_sobel_loss<T: Element>(g: &mut Graph<T>, pred: Var, tgt: Var, sobel_mix: f64) -> Result<Loss> {
    let l2 = l2_loss(g, pred, tgt)?;
    let sobel = advanced_sobel_loss(g, pred, tgt)?;
    weighted_sum(
        g,
        vec![
            Term {
                name: "l2",
                weight: 1.0,
                value: l2,
            },
            Term {
                name: "sobel",
                weight: sobel_mix,
                value: sobel,
            },
        ],
    )
}

/// Training objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Pixel MSE only.
    Mse,
    /// The weighted combined objective.
    Combined,
    /// MSE plus directional Sobel edge loss.
    CombinedSobel,
}

impl LossMode {
    pub fn compute<T: Element>(
        self,
        g: &mut Graph<T>,
        pred: Var,
        tgt: Var,
        w: &LossWeights,
        net: &PerceptualNet,
    ) -> Result<Loss> {
        match self {
            LossMode::Mse => {
                let l2 = l2_loss(g, pred, tgt)?;
                weighted_sum(
                    g,
                    vec![Term {
                        name: "l2",
                        weight: 1.0,
                        value: l2,
                    }],
                )
            }
            LossMode::Combined => combined_loss(g, pred, tgt, w, net),
            LossMode::CombinedSobel => combined_sobel_loss(g, pred, tgt, w.sobel_mix),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Mse => "mse",
            LossMode::Combined => "cl",
            LossMode::CombinedSobel => "csl",
        })
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" | "l2" => Ok(LossMode::Mse),
            "cl" | "combined" => Ok(LossMode::Combined),
            "csl" | "combined_sobel" => Ok(LossMode::CombinedSobel),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss mode {other:?} (expected mse, cl or csl)"
            ))),
        }
    }
}
