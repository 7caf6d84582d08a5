use crate::error::{Error, Result};

/// Cosine decay from `lr_init` at step 0 to `lr_final` at `total_steps`.
pub fn lr_at(step: usize, total_steps: usize, lr_init: f64, lr_final: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} outside schedule of {total_steps} steps"
        )));
    }
    if total_steps == 0 {
        return Ok(lr_init);
    }
    let progress = step as f64 / total_steps as f64;
    Ok(lr_final + 0.5 * (lr_init - lr_final) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(lr_at(0, 100, 2e-3, 5e-5).unwrap(), 2e-3);
        assert!((lr_at(100, 100, 2e-3, 5e-5).unwrap() - 5e-5).abs() < 1e-18);
        assert!((lr_at(50, 100, 2e-3, 5e-5).unwrap() - 1.025e-3).abs() < 1e-15);
        assert!(lr_at(101, 100, 2e-3, 5e-5).is_err());
    }

    #[test]
    fn non_increasing() {
        let lrs: Vec<f64> = (0..=37).map(|s| lr_at(s, 37, 2e-3, 5e-5).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }
}
