//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is an append-only tape. Every op evaluates eagerly, stores its
//! output, and records how to route gradients back to its inputs. Because
//! nodes can only reference earlier nodes, insertion order is a topological
//! order and [`Graph::backward`] simply walks the tape in reverse.
//!
//! ```
//! use relight_core::graph::Graph;
//! use relight_core::tensor::{Shape, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::full(Shape::new(1, 1, 2, 2).unwrap(), 3.0));
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.mean(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[1.5; 4]);
//! ```

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom};
use crate::tensor::{Element, Shape, Tensor};

/// Handle to a node of one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise binary op selector, see [`Graph::ewise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ewise {
    Add,
    Sub,
    Mul,
    Div,
}

/// Spatial axis selector for [`Graph::diff`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Along W: `x[.., y, i+1] − x[.., y, i]`.
    Horizontal,
    /// Along H: `x[.., i+1, x] − x[.., i, x]`.
    Vertical,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Binary(Ewise, Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Abs(Var),
    Relu(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Filter2d {
        x: Var,
        kernel: Rc<[T]>,
        k: usize,
        pad: usize,
    },
    Diff(Var, Axis),
    Downsample(Var),
    Upsample(Var),
    Mean(Var),
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a scalar node as `f64`.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        Ok(self.value(v).item()?.as_f64())
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch { op, lhs: sa, rhs: sb });
        }
        Ok(())
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let value = self.value(a).map(f);
        let rg = self.any_grad(&[a]);
        self.push(value, op, rg)
    }

    pub fn ewise(&mut self, kind: Ewise, a: Var, b: Var) -> Result<Var> {
        let name = match kind {
            Ewise::Add => "add",
            Ewise::Sub => "sub",
            Ewise::Mul => "mul",
            Ewise::Div => "div",
        };
        self.same_shape(name, a, b)?;
        let f: fn(T, T) -> T = match kind {
            Ewise::Add => |x, y| x + y,
            Ewise::Sub => |x, y| x - y,
            Ewise::Mul => |x, y| x * y,
            Ewise::Div => |x, y| x / y,
        };
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::from_vec(self.shape(a), data)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(value, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.ewise(Ewise::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        let alpha = T::from_f64(alpha);
        self.unary(a, Op::Scale(a, alpha), |x| x * alpha)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let c = T::from_f64(c);
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    /// `|x|`, with subgradient 0 at 0.
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), |x| x.abs())
    }

    /// `max(x, 0)`, with subgradient 0 at 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    /// Cross-correlation with zero padding. `w` is `(Cout,Cin,k,k)`, `b` holds
    /// `Cout` values.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(x), self.shape(w), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b).numel() != geom.cout {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    lhs: self.shape(w),
                    rhs: self.shape(b),
                });
            }
        }
        let value = kernels::conv2d_forward(self.value(x), self.value(w), b.map(|b| self.value(b)), &geom);
        let mut deps = vec![x, w];
        deps.extend(b);
        let rg = self.any_grad(&deps);
        Ok(self.push(value, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// Depthwise correlation of each channel with one fixed `k×k` kernel
    /// (stride 1, zero padding `pad`). The kernel is not differentiated.
    pub fn filter2d(&mut self, x: Var, kernel: Rc<[T]>, k: usize, pad: usize) -> Result<Var> {
        let s = self.shape(x);
        if kernel.len() != k * k {
            return Err(Error::InvalidArgument(format!(
                "filter2d kernel has {} values, expected {}",
                kernel.len(),
                k * k
            )));
        }
        if s.h() + 2 * pad < k || s.w() + 2 * pad < k {
            return Err(Error::InvalidShape {
                op: "filter2d",
                msg: format!("input {s} (pad {pad}) smaller than window {k}"),
            });
        }
        let value = kernels::filter2d_forward(self.value(x), &kernel, k, pad);
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Filter2d { x, kernel, k, pad }, rg))
    }

    /// Forward differences between spatial neighbors; the chosen axis
    /// shrinks by one.
    pub fn diff(&mut self, x: Var, axis: Axis) -> Result<Var> {
        let s = self.shape(x);
        let [n, c, h, w] = s.0;
        let (ho, wo) = match axis {
            Axis::Horizontal => (h, w.wrapping_sub(1)),
            Axis::Vertical => (h.wrapping_sub(1), w),
        };
        let out_shape = Shape::new(n, c, ho, wo).map_err(|_| Error::InvalidShape {
            op: "diff",
            msg: format!("need at least 2 samples along the axis, got {s}"),
        })?;
        let step = axis_step(axis, w);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(out_shape.numel());
        for plane in src.chunks(h * w) {
            for y in 0..ho {
                for xx in 0..wo {
                    let i = y * w + xx;
                    out.push(plane[i + step] - plane[i]);
                }
            }
        }
        let value = Tensor::from_vec(out_shape, out)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Diff(x, axis), rg))
    }

    /// 2×2 mean pooling.
    pub fn downsample_avg2x(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if !s.h().is_multiple_of(2) || !s.w().is_multiple_of(2) {
            return Err(Error::InvalidShape {
                op: "downsample_avg2x",
                msg: format!("H and W must be even, got {s}"),
            });
        }
        let value = kernels::downsample_forward(self.value(x));
        let rg = self.any_grad(&[x]);
        Ok(self.push(value, Op::Downsample(x), rg))
    }

    /// ×2 bilinear upsampling, half-pixel centers, border clamped.
    pub fn upsample_bilinear2x(&mut self, x: Var) -> Var {
        let value = kernels::upsample_forward(self.value(x));
        let rg = self.any_grad(&[x]);
        self.push(value, Op::Upsample(x), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: T = self.value(x).data().iter().copied().sum();
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: T = t.data().iter().copied().sum();
        let m = s / T::from_f64(t.len() as f64);
        let rg = self.any_grad(&[x]);
        self.push(Tensor::scalar(m), Op::Mean(x), rg)
    }

    /// Back-propagate from a scalar node. Every leaf created with
    /// `requires_grad` gets a gradient, zero if it does not influence `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let s = self.shape(loss);
        if !s.is_scalar() {
            return Err(Error::NotScalar(s));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Tensor::scalar(T::one()));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        let zip = |a: &Tensor<T>, f: &dyn Fn(T, T) -> T| {
            let d = a.data().iter().zip(g.data()).map(|(&x, &gv)| f(x, gv)).collect();
            Tensor::from_vec(a.shape(), d).expect("same shape")
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                match kind {
                    Ewise::Add => {
                        if needs(a) {
                            accumulate(grads, a, g.clone());
                        }
                        if needs(b) {
                            accumulate(grads, b, g.clone());
                        }
                    }
                    Ewise::Sub => {
                        if needs(a) {
                            accumulate(grads, a, g.clone());
                        }
                        if needs(b) {
                            accumulate(grads, b, g.map(|v| -v));
                        }
                    }
                    Ewise::Mul => {
                        if needs(a) {
                            accumulate(grads, a, zip(val(b), &|y, gv| y * gv));
                        }
                        if needs(b) {
                            accumulate(grads, b, zip(val(a), &|x, gv| x * gv));
                        }
                    }
                    Ewise::Div => {
                        if needs(a) {
                            accumulate(grads, a, zip(val(b), &|y, gv| gv / y));
                        }
                        if needs(b) {
                            // d(a/b)/db = -(a/b)/b
                            let q = &node.value;
                            let d = q
                                .data()
                                .iter()
                                .zip(val(b).data())
                                .zip(g.data())
                                .map(|((&q, &y), &gv)| -gv * q / y)
                                .collect();
                            accumulate(grads, b, Tensor::from_vec(q.shape(), d).expect("same shape"));
                        }
                    }
                }
            }
            Op::Scale(a, alpha) => {
                let alpha = *alpha;
                accumulate(grads, *a, g.map(|v| v * alpha));
            }
            Op::AddScalar(a) => accumulate(grads, *a, g.clone()),
            Op::Abs(a) => {
                let d = zip(val(*a), &|x, gv| {
                    if x > T::zero() {
                        gv
                    } else if x < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                });
                accumulate(grads, *a, d);
            }
            Op::Relu(a) => {
                let d = zip(val(*a), &|x, gv| if x > T::zero() { gv } else { T::zero() });
                accumulate(grads, *a, d);
            }
            Op::Conv2d { x, w, b, geom } => {
                let need = (needs(*x), needs(*w), b.is_some_and(needs));
                let cg = kernels::conv2d_backward(val(*x), val(*w), g, geom, need);
                if let Some(dx) = cg.dx {
                    accumulate(grads, *x, dx);
                }
                if let Some(dw) = cg.dw {
                    accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, cg.db) {
                    let db = Tensor::from_vec(val(*b).shape(), db.into_data()).expect("bias length");
                    accumulate(grads, *b, db);
                }
            }
            Op::Filter2d { x, kernel, k, pad } => {
                let dx = kernels::filter2d_backward(val(*x).shape(), g, kernel, *k, *pad);
                accumulate(grads, *x, dx);
            }
            Op::Diff(x, axis) => {
                let in_shape = val(*x).shape();
                let [_, _, h, w] = in_shape.0;
                let [_, _, ho, wo] = g.shape().0;
                let step = axis_step(*axis, w);
                let mut dx = vec![T::zero(); in_shape.numel()];
                for (gp, dp) in g.data().chunks(ho * wo).zip(dx.chunks_mut(h * w)) {
                    for y in 0..ho {
                        for xx in 0..wo {
                            let gv = gp[y * wo + xx];
                            let i = y * w + xx;
                            dp[i + step] = dp[i + step] + gv;
                            dp[i] = dp[i] - gv;
                        }
                    }
                }
                accumulate(grads, *x, Tensor::from_vec(in_shape, dx).expect("diff dx length"));
            }
            Op::Downsample(x) => accumulate(grads, *x, kernels::downsample_backward(val(*x).shape(), g)),
            Op::Upsample(x) => accumulate(grads, *x, kernels::upsample_backward(val(*x).shape(), g)),
            Op::Sum(x) => {
                let gv = g.data()[0];
                accumulate(grads, *x, Tensor::full(val(*x).shape(), gv));
            }
            Op::Mean(x) => {
                let s = val(*x).shape();
                let gv = g.data()[0] / T::from_f64(s.numel() as f64);
                accumulate(grads, *x, Tensor::full(s, gv));
            }
        }
    }
}

/// Flat offset to the neighbor along `axis` in a plane of width `w`.
fn axis_step(axis: Axis, w: usize) -> usize {
    match axis {
        Axis::Horizontal => 1,
        Axis::Vertical => w,
    }
}

fn accumulate<T: Element>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a = *a + b),
        slot @ None => *slot = Some(g),
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a `requires_grad` leaf; `None` for constants and
    /// intermediate nodes.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: usize, w: usize, data: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape([1, 1, h, w]), data.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_values() {
        let mut g = Graph::new();
        let a = g.param(t(1, 2, &[1.0, 2.0]));
        let b = g.param(t(1, 2, &[3.0, 4.0]));
        let s = g.add(a, b).unwrap();
        assert_eq!(g.value(s).data(), &[4.0, 6.0]);
        let x = g.constant(t(1, 2, &[2.0, 4.0]));
        let h = g.scale(x, 0.5);
        assert_eq!(g.value(h).data(), &[1.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut g = Graph::new();
        let a = g.param(t(1, 2, &[1.0, 2.0]));
        let b = g.param(t(2, 1, &[1.0, 2.0]));
        assert!(matches!(g.add(a, b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn multiplying_by_zeros_annihilates_value_and_grad() {
        let mut g = Graph::new();
        let x = g.param(t(1, 3, &[1.0, -2.0, 5.0]));
        let z = g.constant(t(1, 3, &[0.0; 3]));
        let p = g.mul(x, z).unwrap();
        assert_eq!(g.value(p).data(), &[0.0; 3]);
        let l = g.sum(p);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0; 3]);
        assert!(grads.get(z).is_none());
    }

    #[test]
    fn relu_values_and_subgradient() {
        let mut g = Graph::new();
        let x = g.param(t(1, 3, &[-1.0, 0.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let l = g.sum(r);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_conv_copies_input() {
        let mut g = Graph::new();
        let xs: Vec<f64> = (0..9).map(f64::from).collect();
        let x = g.constant(t(3, 3, &xs));
        let w = g.constant(t(1, 1, &[1.0]));
        let b = g.constant(t(1, 1, &[0.0]));
        let y = g.conv2d(x, w, Some(b), 1, 0).unwrap();
        assert_eq!(g.value(y).data(), &xs[..]);
    }

    #[test]
    fn all_ones_conv_on_constant_image() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(Shape([1, 1, 5, 5]), 1.0));
        let w = g.constant(Tensor::full(Shape([1, 1, 3, 3]), 1.0));
        let y = g.conv2d(x, w, None, 1, 1).unwrap();
        let out = g.value(y);
        assert_eq!(out.shape(), Shape([1, 1, 5, 5]));
        assert_eq!(out.at(0, 0, 2, 2), 9.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(out.at(0, 0, 0, 2), 6.0);
    }

    #[test]
    fn strided_conv_output_shape() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::<f64>::zeros(Shape([1, 2, 8, 8])));
        let w = g.constant(Tensor::zeros(Shape([4, 2, 3, 3])));
        let y = g.conv2d(x, w, None, 2, 1).unwrap();
        assert_eq!(g.shape(y), Shape([1, 4, 4, 4]));
    }

    #[test]
    fn conv_channel_mismatch() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::<f64>::zeros(Shape([1, 2, 8, 8])));
        let w = g.constant(Tensor::zeros(Shape([4, 3, 3, 3])));
        assert!(g.conv2d(x, w, None, 1, 1).is_err());
    }

    #[test]
    fn downsample_block_mean() {
        let mut g = Graph::new();
        let x = g.param(t(2, 2, &[0.0, 2.0, 4.0, 6.0]));
        let d = g.downsample_avg2x(x).unwrap();
        assert_eq!(g.value(d).data(), &[3.0]);
        let l = g.sum(d);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.25; 4]);

        let c = g.constant(Tensor::full(Shape([1, 2, 8, 8]), 0.3));
        let dc = g.downsample_avg2x(c).unwrap();
        assert_eq!(g.shape(dc), Shape([1, 2, 4, 4]));
        assert!(g.value(dc).data().iter().all(|&v| (v - 0.3).abs() < 1e-15));

        let odd = g.constant(Tensor::zeros(Shape([1, 1, 3, 4])));
        assert!(g.downsample_avg2x(odd).is_err());
    }

    #[test]
    fn upsample_constants() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 1, &[5.0]));
        let u = g.upsample_bilinear2x(x);
        assert_eq!(g.value(u).data(), &[5.0; 4]);
        let c = g.constant(Tensor::full(Shape([1, 3, 3, 5]), 0.7));
        let uc = g.upsample_bilinear2x(c);
        assert_eq!(g.shape(uc), Shape([1, 3, 6, 10]));
        assert!(g.value(uc).data().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn reductions() {
        let mut g = Graph::new();
        let x = g.param(t(1, 2, &[1.0, 3.0]));
        let m = g.mean(x);
        assert_eq!(g.scalar(m).unwrap(), 2.0);
        let grads = g.backward(m).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.5, 0.5]);

        let y = g.param(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let my = g.mean(y);
        assert_eq!(g.backward(my).unwrap().get(y).unwrap().data(), &[0.25; 4]);
        let sy = g.sum(y);
        assert_eq!(g.backward(sy).unwrap().get(y).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn backward_of_mean_square() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(Shape([1, 1, 2, 2]), 3.0));
        let sq = g.mul(x, x).unwrap();
        let f = g.mean(sq);
        assert_eq!(g.backward(f).unwrap().get(x).unwrap().data(), &[1.5; 4]);
    }

    #[test]
    fn backward_of_sum_of_sum() {
        let mut g = Graph::new();
        let x = g.param(t(1, 3, &[1.0, 2.0, 3.0]));
        let y = g.param(t(1, 3, &[4.0, 5.0, 6.0]));
        let s = g.add(x, y).unwrap();
        let f = g.sum(s);
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 3]);
        assert_eq!(grads.get(y).unwrap().data(), &[1.0; 3]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.param(t(1, 2, &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn untouched_leaves_get_zero_grad() {
        let mut g = Graph::new();
        let x = g.param(t(1, 2, &[1.0, 2.0]));
        let unused = g.param(t(1, 1, &[7.0]));
        let f = g.sum(x);
        let grads = g.backward(f).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0]);
    }
}
