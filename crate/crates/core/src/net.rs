//! The three-level coarse-to-fine relighting network and its two-stage
//! cascade.
//!
//! One stage runs a 2×2-mean image pyramid `B1 (¼) → B2 (½) → B3 (1)`
//! coarse to fine. Each level has an encoder `E` (÷4 spatial) and a mirrored
//! decoder `D`:
//!
//! ```text
//! F1 = E1(B1)                              O1 = D1(F1)
//! F2 = E2(B2 + up(O1)) + up(F1)            O2 = D2(F2)
//! F3 = E3(B3 + up(O2)) + up(F2)            O3 = D3(F3)
//! ```
//!
//! The stacked variant feeds `O3` of stage 1 into an identically shaped
//! stage 2 with its own weights.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Element, Init, Shape, Tensor};

/// Pyramid depth. Fixed.
pub const LEVELS: usize = 3;

/// Spatial dims of a network input must be multiples of this.
pub const INPUT_MULTIPLE: usize = 16;

const KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub base_channels: usize,
    /// 1 for a single network, 2 for the stacked cascade.
    pub stacks: usize,
    pub init_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            base_channels: 8,
            stacks: 2,
            init_seed: 0,
        }
    }
}

impl NetConfig {
    pub fn new(base_channels: usize, stacks: usize, init_seed: u64) -> Result<Self> {
        let cfg = NetConfig {
            base_channels,
            stacks,
            init_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::InvalidArgument("base_channels must be >= 1".into()));
        }
        if !(1..=2).contains(&self.stacks) {
            return Err(Error::InvalidArgument(format!(
                "stacks must be 1 or 2, got {}",
                self.stacks
            )));
        }
        Ok(())
    }

    /// Same network with a different stack count.
    pub fn with_stacks(self, stacks: usize) -> Self {
        NetConfig { stacks, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Encoder,
    Decoder,
}

impl Part {
    fn tag(self) -> &'static str {
        match self {
            Part::Encoder => "enc",
            Part::Decoder => "dec",
        }
    }
}

/// Name prefix of the sub-network at `stack` (1-based) and `level` (1 = coarsest).
pub fn prefix(stack: usize, level: usize, part: Part) -> String {
    format!("s{stack}.l{level}.{}", part.tag())
}

const RES_LAYERS: [&str; 4] = ["res1.conv_a", "res1.conv_b", "res2.conv_a", "res2.conv_b"];

/// `(layer, c_in, c_out)` in forward order.
fn layers(part: Part, c: usize) -> Vec<(&'static str, usize, usize)> {
    let res = RES_LAYERS.iter().map(|&n| (n, 4 * c, 4 * c));
    match part {
        Part::Encoder => [("conv_in", 3, c), ("down1", c, 2 * c), ("down2", 2 * c, 4 * c)]
            .into_iter()
            .chain(res)
            .collect(),
        Part::Decoder => res
            .chain([("up1", 4 * c, 2 * c), ("up2", 2 * c, c), ("conv_out", c, 3)])
            .collect(),
    }
}

/// Every parameter name and shape, in initialization order.
pub fn param_layout(cfg: &NetConfig) -> Vec<(String, Shape)> {
    let mut out = Vec::new();
    for s in 1..=cfg.stacks {
        for l in 1..=LEVELS {
            for part in [Part::Encoder, Part::Decoder] {
                let pre = prefix(s, l, part);
                for (name, cin, cout) in layers(part, cfg.base_channels) {
                    out.push((format!("{pre}.{name}.weight"), Shape([cout, cin, KERNEL, KERNEL])));
                    out.push((format!("{pre}.{name}.bias"), Shape([1, cout, 1, 1])));
                }
            }
        }
    }
    out
}

/// Named parameter set of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    config: NetConfig,
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Params<T> {
    /// He-uniform weights (bound `√(6/fan_in)`) drawn from `init_seed`, zero
    /// biases.
    pub fn init(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let tensors = param_layout(&config)
            .into_iter()
            .map(|(name, shape)| {
                let t = if name.ends_with(".weight") {
                    let fan_in = (shape.c() * shape.h() * shape.w()) as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    Tensor::<f64>::random_with(
                        shape,
                        Init::Uniform {
                            low: -bound,
                            high: bound,
                        },
                        &mut rng,
                    )
                    .cast()
                } else {
                    Tensor::zeros(shape)
                };
                (name, t)
            })
            .collect();
        Ok(Params { config, tensors })
    }

    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let tensors = param_layout(&config)
            .into_iter()
            .map(|(name, shape)| (name, Tensor::zeros(shape)))
            .collect();
        Ok(Params { config, tensors })
    }

    /// Adopt an existing name→tensor map, checking it against the layout of
    /// `config`.
    pub fn from_tensors(config: NetConfig, tensors: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (name, shape) in layout {
            match tensors.get(&name) {
                Some(t) if t.shape() == shape => {}
                Some(t) => {
                    return Err(Error::ShapeMismatch {
                        op: "parameter",
                        lhs: shape,
                        rhs: t.shape(),
                    })
                }
                None => return Err(Error::InvalidArgument(format!("missing parameter {name}"))),
            }
        }
        Ok(Params { config, tensors })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor<T>> {
        &self.tensors
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Element>(&self) -> Params<U> {
        Params {
            config: self.config,
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Insert every tensor as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> ParamVars {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| (k.clone(), g.leaf(v.clone(), requires_grad)))
            .collect();
        ParamVars { vars }
    }
}

/// Graph handles of a bound [`Params`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Replace one handle, e.g. to differentiate with respect to a single
    /// tensor.
    pub fn set(&mut self, name: &str, v: Var) -> Result<()> {
        match self.vars.get_mut(name) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("unknown parameter {name}"))),
        }
    }
}

fn conv<T: Element>(g: &mut Graph<T>, p: &ParamVars, pre: &str, layer: &str, x: Var, stride: usize) -> Result<Var> {
    let w = p.get(&format!("{pre}.{layer}.weight"))?;
    let b = p.get(&format!("{pre}.{layer}.bias"))?;
    g.conv2d(x, w, Some(b), stride, 1)
}

fn conv_relu<T: Element>(
    g: &mut Graph<T>,
    p: &ParamVars,
    pre: &str,
    layer: &str,
    x: Var,
    stride: usize,
) -> Result<Var> {
    let y = conv(g, p, pre, layer, x, stride)?;
    Ok(g.relu(y))
}

fn res_block<T: Element>(g: &mut Graph<T>, p: &ParamVars, pre: &str, block: &str, x: Var) -> Result<Var> {
    let h = conv_relu(g, p, pre, &format!("{block}.conv_a"), x, 1)?;
    let h = conv(g, p, pre, &format!("{block}.conv_b"), h, 1)?;
    let s = g.add(h, x)?;
    Ok(g.relu(s))
}

/// `[N,3,h,w] → [N,4C,h/4,w/4]`.
pub fn encoder_forward<T: Element>(g: &mut Graph<T>, p: &ParamVars, pre: &str, x: Var) -> Result<Var> {
    let s = g.shape(x);
    if !s.h().is_multiple_of(4) || !s.w().is_multiple_of(4) {
        return Err(Error::InvalidShape {
            op: "encoder",
            msg: format!("H and W must be divisible by 4, got {s}"),
        });
    }
    let h = conv_relu(g, p, pre, "conv_in", x, 1)?;
    let h = conv_relu(g, p, pre, "down1", h, 2)?;
    let h = conv_relu(g, p, pre, "down2", h, 2)?;
    let h = res_block(g, p, pre, "res1", h)?;
    res_block(g, p, pre, "res2", h)
}

/// `[N,4C,h,w] → [N,3,4h,4w]`, linear output.
pub fn decoder_forward<T: Element>(g: &mut Graph<T>, p: &ParamVars, pre: &str, f: Var) -> Result<Var> {
    let h = res_block(g, p, pre, "res1", f)?;
    let h = res_block(g, p, pre, "res2", h)?;
    let h = g.upsample_bilinear2x(h);
    let h = conv_relu(g, p, pre, "up1", h, 1)?;
    let h = g.upsample_bilinear2x(h);
    let h = conv_relu(g, p, pre, "up2", h, 1)?;
    conv(g, p, pre, "conv_out", h, 1)
}

/// `(B1, B2, B3)` at scales ¼, ½ and 1.
pub fn build_pyramid<T: Element>(g: &mut Graph<T>, image: Var) -> Result<[Var; 3]> {
    let s = g.shape(image);
    if !s.h().is_multiple_of(4) || !s.w().is_multiple_of(4) {
        return Err(Error::InvalidShape {
            op: "pyramid",
            msg: format!("H and W must be divisible by 4, got {s}"),
        });
    }
    let b2 = g.downsample_avg2x(image)?;
    let b1 = g.downsample_avg2x(b2)?;
    Ok([b1, b2, image])
}

fn check_input(s: Shape) -> Result<()> {
    if s.c() != 3 {
        return Err(Error::InvalidShape {
            op: "dmshn",
            msg: format!("expected 3 input channels, got {s}"),
        });
    }
    if !s.h().is_multiple_of(INPUT_MULTIPLE) || !s.w().is_multiple_of(INPUT_MULTIPLE) {
        return Err(Error::InvalidShape {
            op: "dmshn",
            msg: format!("H and W must be divisible by {INPUT_MULTIPLE}, got {s}"),
        });
    }
    Ok(())
}

/// One coarse-to-fine stage using the parameters of `stack` (1-based).
pub fn dmshn_forward<T: Element>(g: &mut Graph<T>, p: &ParamVars, stack: usize, image: Var) -> Result<Var> {
    check_input(g.shape(image))?;
    let pyramid = build_pyramid(g, image)?;
    let mut prev: Option<(Var, Var)> = None;
    for (i, &level_in) in pyramid.iter().enumerate() {
        let level = i + 1;
        let (enc, dec) = (prefix(stack, level, Part::Encoder), prefix(stack, level, Part::Decoder));
        let (out, feat) = match prev {
            None => {
                let f = encoder_forward(g, p, &enc, level_in)?;
                (decoder_forward(g, p, &dec, f)?, f)
            }
            Some((prev_out, prev_feat)) => {
                let up_out = g.upsample_bilinear2x(prev_out);
                let x = g.add(level_in, up_out)?;
                let e = encoder_forward(g, p, &enc, x)?;
                let up_feat = g.upsample_bilinear2x(prev_feat);
                let f = g.add(e, up_feat)?;
                (decoder_forward(g, p, &dec, f)?, f)
            }
        };
        prev = Some((out, feat));
    }
    Ok(prev.expect("three levels").0)
}

/// Two cascaded stages: `(O_mid, O_final)`.
pub fn stacked_forward<T: Element>(g: &mut Graph<T>, p: &ParamVars, image: Var) -> Result<(Var, Var)> {
    let mid = dmshn_forward(g, p, 1, image)?;
    let fin = dmshn_forward(g, p, 2, mid)?;
    Ok((mid, fin))
}

/// Final output of the configured variant.
pub fn forward<T: Element>(g: &mut Graph<T>, p: &ParamVars, cfg: &NetConfig, image: Var) -> Result<Var> {
    match cfg.stacks {
        1 => dmshn_forward(g, p, 1, image),
        2 => Ok(stacked_forward(g, p, image)?.1),
        n => Err(Error::InvalidArgument(format!("stacks must be 1 or 2, got {n}"))),
    }
}

/// Gradient-free forward pass returning the (unclamped) output image.
pub fn infer<T: Element>(params: &Params<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.constant(image.clone());
    let out = forward(&mut g, &p, params.config(), x)?;
    Ok(g.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(c: usize, stacks: usize) -> NetConfig {
        NetConfig::new(c, stacks, 3).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig::new(8, 3, 0).is_err());
        assert!(NetConfig::new(0, 1, 0).is_err());
        assert!(NetConfig::new(8, 1, 0).is_ok());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = Params::<f32>::init(cfg(8, 2)).unwrap();
        let b = Params::<f32>::init(cfg(8, 2)).unwrap();
        assert_eq!(a, b);
        for (name, t) in a.iter() {
            if name.ends_with(".bias") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            } else {
                let bound = (6.0 / (t.shape().c() * 9) as f32).sqrt();
                assert!(t.data().iter().all(|v| v.abs() <= bound), "{name}");
            }
        }
        assert_ne!(a, Params::init(NetConfig::new(8, 2, 4).unwrap()).unwrap());
    }

    #[test]
    fn stacked_has_twice_the_parameters() {
        let single = Params::<f32>::init(cfg(8, 1)).unwrap();
        let stacked = Params::<f32>::init(cfg(8, 2)).unwrap();
        assert_eq!(stacked.count(), 2 * single.count());
        assert_eq!(stacked.len(), 2 * single.len());
        // 3 levels × (7 + 7 layers) × (weight + bias)
        assert_eq!(single.len(), 3 * 14 * 2);
        // Per level with C=8: encoder 3·8·9+8 + 8·16·9+16 + 16·32·9+32 + 4(32·32·9+32),
        // decoder 4(32·32·9+32) + 32·16·9+16 + 16·8·9+8 + 8·3·9+3.
        let enc = 224 + 1168 + 4640 + 4 * 9248;
        let dec = 4 * 9248 + 4624 + 1160 + 219;
        assert_eq!(single.count(), 3 * (enc + dec));
    }

    #[test]
    fn stage_one_of_stacked_matches_single_init() {
        let single = Params::<f32>::init(cfg(4, 1)).unwrap();
        let stacked = Params::<f32>::init(cfg(4, 2)).unwrap();
        for (name, t) in single.iter() {
            assert_eq!(stacked.get(name), Some(t));
        }
    }

    #[test]
    fn pyramid_shapes_and_constants() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(Shape([1, 3, 8, 8]), 0.25));
        let [b1, b2, b3] = build_pyramid(&mut g, x).unwrap();
        assert_eq!(g.shape(b1), Shape([1, 3, 2, 2]));
        assert_eq!(g.shape(b2), Shape([1, 3, 4, 4]));
        assert_eq!(g.shape(b3), Shape([1, 3, 8, 8]));
        for b in [b1, b2, b3] {
            assert!(g.value(b).data().iter().all(|&v| v == 0.25));
        }
        let bad = g.constant(Tensor::zeros(Shape([1, 3, 6, 8])));
        assert!(build_pyramid(&mut g, bad).is_err());
    }

    #[test]
    fn encoder_decoder_shapes() {
        let params = Params::<f64>::init(cfg(4, 1)).unwrap();
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let x = g.constant(Tensor::full(Shape([1, 3, 16, 16]), 0.5));
        let f = encoder_forward(&mut g, &p, &prefix(1, 1, Part::Encoder), x).unwrap();
        assert_eq!(g.shape(f), Shape([1, 16, 4, 4]));
        let o = decoder_forward(&mut g, &p, &prefix(1, 1, Part::Decoder), f).unwrap();
        assert_eq!(g.shape(o), Shape([1, 3, 16, 16]));

        let x = g.constant(Tensor::full(Shape([2, 3, 12, 20]), 0.5));
        let f = encoder_forward(&mut g, &p, &prefix(1, 2, Part::Encoder), x).unwrap();
        let o = decoder_forward(&mut g, &p, &prefix(1, 2, Part::Decoder), f).unwrap();
        assert_eq!(g.shape(o), Shape([2, 3, 12, 20]));

        let bad = g.constant(Tensor::zeros(Shape([1, 3, 10, 8])));
        assert!(encoder_forward(&mut g, &p, &prefix(1, 1, Part::Encoder), bad).is_err());
        let wrong_c = g.constant(Tensor::zeros(Shape([1, 8, 4, 4])));
        assert!(decoder_forward(&mut g, &p, &prefix(1, 1, Part::Decoder), wrong_c).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_features() {
        let params = Params::<f64>::zeros(cfg(4, 1)).unwrap();
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let x = g.constant(Tensor::random(
            Shape([1, 3, 16, 16]),
            Init::Uniform { low: 0.0, high: 1.0 },
            1,
        ));
        let f = encoder_forward(&mut g, &p, &prefix(1, 1, Part::Encoder), x).unwrap();
        assert!(g.value(f).data().iter().all(|&v| v == 0.0));
        let o = decoder_forward(&mut g, &p, &prefix(1, 1, Part::Decoder), f).unwrap();
        assert!(g.value(o).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dmshn_rejects_bad_sizes() {
        let params = Params::<f32>::init(cfg(2, 1)).unwrap();
        assert!(infer(&params, &Tensor::zeros(Shape([1, 3, 24, 32]))).is_err());
        assert!(infer(&params, &Tensor::zeros(Shape([1, 1, 32, 32]))).is_err());
        let out = infer(&params, &Tensor::zeros(Shape([1, 3, 64, 64]))).unwrap();
        assert_eq!(out.shape(), Shape([1, 3, 64, 64]));
    }
}
