use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::Params;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Element> AdamState<T> {
    /// Zero moments shaped like `params`, `t = 0`.
    pub fn new(params: &Params<T>) -> Self {
        let moments = params
            .iter()
            .map(|(k, v)| (k.clone(), (Tensor::zeros(v.shape()), Tensor::zeros(v.shape()))))
            .collect();
        AdamState { t: 0, moments }
    }
}

/// One bias-corrected Adam update, applied in parameter-name order.
pub fn adam_step<T: Element>(
    params: &mut Params<T>,
    grads: &BTreeMap<String, Tensor<T>>,
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for {name}")))?;
        if g.shape() != p.shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            });
        }
        match state.moments.get(name) {
            Some((m, _)) if m.shape() == p.shape() => {}
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "optimizer state does not match parameter {name}"
                )))
            }
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let bc1 = T::from_f64(1.0 - cfg.beta1.powi(t));
    let bc2 = T::from_f64(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::from_f64(lr), T::from_f64(cfg.eps));

    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        let (m, v) = state.moments.get_mut(name).expect("checked above");
        for (((theta, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use crate::tensor::Shape;

    fn tiny() -> (Params<f64>, BTreeMap<String, Tensor<f64>>) {
        let p = Params::zeros(NetConfig::new(1, 1, 0).unwrap()).unwrap();
        let g = p
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::full(v.shape(), 0.5)))
            .collect();
        (p, g)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut p, g) = tiny();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(st.t, 1);
        for (_, t) in p.iter() {
            assert!(t.data().iter().all(|&v| (v + 1e-3).abs() < 1e-6));
        }
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let (mut p, g) = tiny();
        let before = p.clone();
        let zeros = g.iter().map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()))).collect();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &zeros, &mut st, 1e-3, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let (mut p, g) = tiny();
            let mut st = AdamState::new(&p);
            for _ in 0..3 {
                adam_step(&mut p, &g, &mut st, 2e-3, &AdamConfig::default()).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut p, mut g) = tiny();
        let first = g.keys().next().unwrap().clone();
        g.insert(first, Tensor::zeros(Shape([1, 1, 1, 1])));
        let mut st = AdamState::new(&p);
        let before = p.clone();
        assert!(adam_step(&mut p, &g, &mut st, 1e-3, &AdamConfig::default()).is_err());
        assert_eq!(p, before);
        assert_eq!(st.t, 0);
    }
}
