//! Central finite-difference gradient checks against the autodiff engine.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Elementwise relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Maximum relative error between the autodiff gradient of `f` at `x` and
/// central differences `(f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h`.
///
/// `f` receives a fresh graph and the leaf holding `x`, and must return a
/// scalar node. `indices` restricts the check to selected elements of `x`;
/// `None` checks all of them.
pub fn grad_check<F>(x: &Tensor<f64>, h: f64, indices: Option<&[usize]>, f: F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let eval = |t: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(t);
        let out = f(&mut g, v)?;
        g.scalar(out)
    };

    let mut g = Graph::new();
    let xv = g.param(x.clone());
    let out = f(&mut g, xv)?;
    let grads = g.backward(out)?;
    let analytic = grads.get(xv).expect("x is a grad leaf").clone();

    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };

    let mut worst = 0.0f64;
    for &i in idx {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], fd));
    }
    Ok(worst)
}
