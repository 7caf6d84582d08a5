//! Raw forward/backward kernels behind the graph ops.
//!
//! Every kernel works on contiguous NCHW buffers. Batch-parallel paths reduce
//! per-sample partial results in index order, so outputs are bitwise identical
//! for any thread count.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

static THREADS: AtomicUsize = AtomicUsize::new(1);

/// Cap internal op parallelism. `1` (the default) runs everything on the
/// calling thread.
pub fn set_threads(n: usize) {
    let n = n.max(1);
    if n > 1 {
        // Only the first global pool wins; later calls keep the cap only.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    THREADS.store(n, Ordering::Relaxed);
}

pub fn threads() -> usize {
    THREADS.load(Ordering::Relaxed)
}

fn for_each_sample<T, F>(out: &mut [T], per: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if threads() > 1 {
        out.par_chunks_mut(per).enumerate().for_each(|(n, o)| f(n, o));
    } else {
        out.chunks_mut(per).enumerate().for_each(|(n, o)| f(n, o));
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub hout: usize,
    pub wout: usize,
}

impl ConvGeom {
    pub fn new(x: Shape, w: Shape, stride: usize, pad: usize) -> Result<Self> {
        let [n, cin, h, wd] = x.0;
        let [cout, wcin, kh, kw] = w.0;
        if wcin != cin {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: x,
                rhs: w,
            });
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!("kernel must be square with odd size, got {w}"),
            });
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be >= 1".into()));
        }
        let k = kh;
        if h + 2 * pad < k || wd + 2 * pad < k {
            return Err(Error::InvalidShape {
                op: "conv2d",
                msg: format!("padded input {x} (pad {pad}) smaller than kernel {k}"),
            });
        }
        Ok(ConvGeom {
            n,
            cin,
            h,
            w: wd,
            cout,
            k,
            stride,
            pad,
            hout: (h + 2 * pad - k) / stride + 1,
            wout: (wd + 2 * pad - k) / stride + 1,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn pixels(&self) -> usize {
        self.hout * self.wout
    }

    pub fn out_shape(&self) -> Shape {
        Shape([self.n, self.cout, self.hout, self.wout])
    }
}

/// Unfold one sample `[Cin,H,W]` into `[Cin·k·k, Hout·Wout]`.
fn im2col<T: Element>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.pixels();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut col[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.hout {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oy * g.wout..(oy + 1) * g.wout];
                    if iy < 0 || iy >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulate columns back into `[Cin,H,W]`.
fn col2im<T: Element>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let p = g.pixels();
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &col[((c * g.k + ki) * g.k + kj) * p..][..p];
                for oy in 0..g.hout {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wout {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + row[oy * g.wout + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    g: &ConvGeom,
) -> Tensor<T> {
    let (kk, p) = (g.patch(), g.pixels());
    let in_per = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); g.n * g.cout * p];
    for_each_sample(&mut out, g.cout * p, |n, o| {
        let mut col = vec![T::zero(); kk * p];
        im2col(&x.data()[n * in_per..(n + 1) * in_per], g, &mut col);
        T::gemm(
            g.cout,
            kk,
            p,
            w.data(),
            (kk as isize, 1),
            &col,
            (p as isize, 1),
            T::zero(),
            o,
        );
        if let Some(b) = bias {
            for (c, row) in o.chunks_mut(p).enumerate() {
                let bc = b.data()[c];
                row.iter_mut().for_each(|v| *v = *v + bc);
            }
        }
    });
    Tensor::from_vec(g.out_shape(), out).expect("conv output length")
}

pub(crate) struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

pub(crate) fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dout: &Tensor<T>,
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let (need_dx, need_dw, need_db) = need;
    let (kk, p) = (g.patch(), g.pixels());
    let in_per = g.cin * g.h * g.w;
    let out_per = g.cout * p;

    let dx = need_dx.then(|| {
        let mut dx = vec![T::zero(); g.n * in_per];
        for_each_sample(&mut dx, in_per, |n, dxn| {
            let mut dcol = vec![T::zero(); kk * p];
            let go = &dout.data()[n * out_per..(n + 1) * out_per];
            // dcol[K,P] = W^T[K,Cout] · dout[Cout,P]
            T::gemm(
                kk,
                g.cout,
                p,
                w.data(),
                (1, kk as isize),
                go,
                (p as isize, 1),
                T::zero(),
                &mut dcol,
            );
            col2im(&dcol, g, dxn);
        });
        Tensor::from_vec(x.shape(), dx).expect("dx length")
    });

    let dw = need_dw.then(|| {
        let wlen = g.cout * kk;
        let mut partial = vec![T::zero(); g.n * wlen];
        for_each_sample(&mut partial, wlen, |n, dwn| {
            let mut col = vec![T::zero(); kk * p];
            im2col(&x.data()[n * in_per..(n + 1) * in_per], g, &mut col);
            let go = &dout.data()[n * out_per..(n + 1) * out_per];
            // dW[Cout,K] = dout[Cout,P] · col^T[P,K]
            T::gemm(
                g.cout,
                p,
                kk,
                go,
                (p as isize, 1),
                &col,
                (1, p as isize),
                T::zero(),
                dwn,
            );
        });
        let mut dw = vec![T::zero(); wlen];
        for chunk in partial.chunks(wlen) {
            dw.iter_mut().zip(chunk).for_each(|(a, &b)| *a = *a + b);
        }
        Tensor::from_vec(w.shape(), dw).expect("dw length")
    });

    let db = need_db.then(|| {
        let mut db = vec![T::zero(); g.cout];
        for n in 0..g.n {
            for (c, acc) in db.iter_mut().enumerate() {
                let row = &dout.data()[n * out_per + c * p..][..p];
                *acc = *acc + row.iter().copied().sum::<T>();
            }
        }
        Tensor::from_vec(Shape([1, g.cout, 1, 1]), db).expect("db length")
    });

    ConvGrads { dx, dw, db }
}

/// Depthwise correlation of every channel with one fixed `k×k` kernel,
/// stride 1, zero padding.
pub(crate) fn filter2d_forward<T: Element>(x: &Tensor<T>, kernel: &[T], k: usize, pad: usize) -> Tensor<T> {
    let [n, c, h, w] = x.shape().0;
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let mut out = vec![T::zero(); n * c * ho * wo];
    for (plane, oplane) in x.data().chunks(h * w).zip(out.chunks_mut(ho * wo)) {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = T::zero();
                for ki in 0..k {
                    let iy = (oy + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = &plane[iy as usize * w..][..w];
                    let krow = &kernel[ki * k..][..k];
                    for (kj, &kv) in krow.iter().enumerate() {
                        let ix = (ox + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            acc = acc + kv * row[ix as usize];
                        }
                    }
                }
                oplane[oy * wo + ox] = acc;
            }
        }
    }
    Tensor::from_vec(Shape([n, c, ho, wo]), out).expect("filter output length")
}

pub(crate) fn filter2d_backward<T: Element>(
    in_shape: Shape,
    dout: &Tensor<T>,
    kernel: &[T],
    k: usize,
    pad: usize,
) -> Tensor<T> {
    let [_, _, h, w] = in_shape.0;
    let [_, _, ho, wo] = dout.shape().0;
    let mut dx = vec![T::zero(); in_shape.numel()];
    for (gplane, dplane) in dout.data().chunks(ho * wo).zip(dx.chunks_mut(h * w)) {
        for oy in 0..ho {
            for ox in 0..wo {
                let gv = gplane[oy * wo + ox];
                for ki in 0..k {
                    let iy = (oy + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kj in 0..k {
                        let ix = (ox + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            let i = iy as usize * w + ix as usize;
                            dplane[i] = dplane[i] + kernel[ki * k + kj] * gv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(in_shape, dx).expect("filter dx length")
}

pub(crate) fn downsample_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape().0;
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks(h * w) {
        for oy in 0..ho {
            let r0 = &plane[2 * oy * w..][..w];
            let r1 = &plane[(2 * oy + 1) * w..][..w];
            for ox in 0..wo {
                let s = (r0[2 * ox] + r0[2 * ox + 1]) + (r1[2 * ox] + r1[2 * ox + 1]);
                out.push(s * quarter);
            }
        }
    }
    Tensor::from_vec(Shape([n, c, ho, wo]), out).expect("downsample length")
}

pub(crate) fn downsample_backward<T: Element>(in_shape: Shape, dout: &Tensor<T>) -> Tensor<T> {
    let [_, _, h, w] = in_shape.0;
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let mut dx = vec![T::zero(); in_shape.numel()];
    for (gplane, dplane) in dout.data().chunks(ho * wo).zip(dx.chunks_mut(h * w)) {
        for y in 0..h {
            for x in 0..w {
                dplane[y * w + x] = gplane[(y / 2) * wo + x / 2] * quarter;
            }
        }
    }
    Tensor::from_vec(in_shape, dx).expect("downsample dx length")
}

/// Source taps for one axis of ×2 bilinear upsampling with half-pixel
/// centers: output `i` samples source coordinate `(i + 0.5)/2 − 0.5`, clamped
/// to `[0, len−1]`.
fn upsample_taps(len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * len)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample_forward<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape().0;
    let (ty, tx) = (upsample_taps(h), upsample_taps(w));
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data().chunks(h * w) {
        for &(y0, y1, fy) in &ty {
            let (fy1, fy0) = (T::from_f64(fy), T::from_f64(1.0 - fy));
            for &(x0, x1, fx) in &tx {
                let (fx1, fx0) = (T::from_f64(fx), T::from_f64(1.0 - fx));
                let top = plane[y0 * w + x0] * fx0 + plane[y0 * w + x1] * fx1;
                let bot = plane[y1 * w + x0] * fx0 + plane[y1 * w + x1] * fx1;
                out.push(top * fy0 + bot * fy1);
            }
        }
    }
    Tensor::from_vec(Shape([n, c, ho, wo]), out).expect("upsample length")
}

pub(crate) fn upsample_backward<T: Element>(in_shape: Shape, dout: &Tensor<T>) -> Tensor<T> {
    let [_, _, h, w] = in_shape.0;
    let (ty, tx) = (upsample_taps(h), upsample_taps(w));
    let wo = 2 * w;
    let mut dx = vec![T::zero(); in_shape.numel()];
    for (gplane, dplane) in dout.data().chunks(4 * h * w).zip(dx.chunks_mut(h * w)) {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let (fy1, fy0) = (T::from_f64(fy), T::from_f64(1.0 - fy));
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let (fx1, fx0) = (T::from_f64(fx), T::from_f64(1.0 - fx));
                let g = gplane[oy * wo + ox];
                dplane[y0 * w + x0] = dplane[y0 * w + x0] + g * fy0 * fx0;
                dplane[y0 * w + x1] = dplane[y0 * w + x1] + g * fy0 * fx1;
                dplane[y1 * w + x0] = dplane[y1 * w + x0] + g * fy1 * fx0;
                dplane[y1 * w + x1] = dplane[y1 * w + x1] + g * fy1 * fx1;
            }
        }
    }
    Tensor::from_vec(in_shape, dx).expect("upsample dx length")
}
