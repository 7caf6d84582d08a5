//! Evaluation metrics: PSNR and SSIM on clamped images.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::losses::{ssim_value, SsimParams};
use crate::tensor::{Element, Tensor};

fn check_same<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

/// `10·log10(max² / MSE)` after clamping both images to `[0, max_val]`.
/// Identical images give `+∞`.
pub fn psnr<T: Element>(pred: &Tensor<T>, tgt: &Tensor<T>, max_val: f64) -> Result<f64> {
    check_same("psnr", pred, tgt)?;
    let sse: f64 = pred
        .data()
        .iter()
        .zip(tgt.data())
        .map(|(&p, &t)| {
            let d = p.as_f64().clamp(0.0, max_val) - t.as_f64().clamp(0.0, max_val);
            d * d
        })
        .sum();
    let mse = sse / pred.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

/// Gradient-free SSIM of images clamped to `[0, 1]`, using the same formula
/// as [`crate::losses::ssim_value`].
pub fn ssim_metric<T: Element>(pred: &Tensor<T>, tgt: &Tensor<T>) -> Result<f64> {
    check_same("ssim_metric", pred, tgt)?;
    let mut g = Graph::<f64>::new();
    let p = g.constant(pred.cast::<f64>().clamp(0.0, 1.0));
    let t = g.constant(tgt.cast::<f64>().clamp(0.0, 1.0));
    let v = ssim_value(&mut g, p, t, &SsimParams::default())?;
    g.scalar(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMetrics {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<SampleMetrics>,
    /// Mean over samples with finite PSNR; `+∞` if every sample is exact.
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    /// Samples excluded from `mean_psnr` because their PSNR is infinite.
    pub infinite_psnr: usize,
}

impl MetricsReport {
    /// Aggregate in row order.
    pub fn from_rows(rows: Vec<SampleMetrics>) -> Self {
        let finite: Vec<f64> = rows.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
        let infinite_psnr = rows.len() - finite.len();
        let mean_psnr = if finite.is_empty() {
            if rows.is_empty() {
                f64::NAN
            } else {
                f64::INFINITY
            }
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / rows.len() as f64;
        MetricsReport {
            rows,
            mean_psnr,
            mean_ssim,
            infinite_psnr,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `sample_id<TAB>psnr<TAB>ssim` per line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{}", r.id, r.psnr, r.ssim);
        }
        s
    }

    /// Human-readable table with a mean row.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>10}  {:>8}", "sample", "PSNR (dB)", "SSIM");
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>10.4}  {:>8.4}", r.id, r.psnr, r.ssim);
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.4}  {:>8.4}",
            "mean", self.mean_psnr, self.mean_ssim
        );
        if self.infinite_psnr > 0 {
            let _ = writeln!(
                s,
                "({} exact samples with infinite PSNR excluded from the mean)",
                self.infinite_psnr
            );
        }
        s
    }
}
