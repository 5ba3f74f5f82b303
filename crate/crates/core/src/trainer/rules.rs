use crate::error::{DvpError, Result};
use crate::losses::{pixel_distance_tensor, ConfidenceMap};
use crate::nn::{Scalar, Tensor};
use crate::video::Frame;

/// Per-pixel main-mode selection: a pixel stays with the main head when its
/// distance to the target is below the larger of the minor head's distance
/// and `delta`.
pub fn compute_confidence(main: &Frame, minor: &Frame, target: &Frame, delta: f64) -> Result<ConfidenceMap> {
    compute_confidence_tensor(
        &Tensor::<f64>::from_frame(main),
        &Tensor::from_frame(minor),
        &Tensor::from_frame(target),
        delta,
    )
}

pub fn compute_confidence_tensor<T: Scalar>(
    main: &Tensor<T>,
    minor: &Tensor<T>,
    target: &Tensor<T>,
    delta: f64,
) -> Result<ConfidenceMap> {
    let d_main = pixel_distance_tensor(main, target)?;
    let d_minor = pixel_distance_tensor(minor, target)?;
    let keep = d_main
        .iter()
        .zip(&d_minor)
        .map(|(&a, &b)| confident(a, b, delta))
        .collect();
    ConfidenceMap::from_bools(main.height, main.width, keep)
}

/// The scalar confidence rule.
pub fn confident(d_main: f64, d_minor: f64, delta: f64) -> bool {
    d_main < d_minor.max(delta)
}

/// True when the last `k` epoch losses, divided by their maximum, have a
/// (population) variance below `threshold`.
pub fn auto_stop_check(loss_history: &[f64], k: usize, threshold: f64) -> Result<bool> {
    if k < 2 {
        return Err(DvpError::Config(format!("auto-stop window must be at least 2, got {k}")));
    }
    if !(threshold > 0.0) {
        return Err(DvpError::Config(format!("auto-stop threshold must be positive, got {threshold}")));
    }
    if let Some(v) = loss_history.iter().find(|v| !v.is_finite()) {
        return Err(DvpError::NonFinite(format!("loss history holds {v}")));
    }
    if loss_history.len() < k {
        return Ok(false);
    }
    let window = &loss_history[loss_history.len() - k..];
    let max = window.iter().cloned().fold(f64::MIN, f64::max);
    if max == 0.0 {
        return Ok(true);
    }
    let normalized: Vec<f64> = window.iter().map(|v| v / max).collect();
    let mean = normalized.iter().sum::<f64>() / k as f64;
    let var = normalized.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(var < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confidence_examples() {
        assert!(confident(0.01, 0.40, 0.02));
        assert!(confident(0.015, 0.010, 0.02));
        assert!(!confident(0.30, 0.05, 0.02));
    }

    #[test]
    fn confidence_ignores_common_offsets() {
        let main = Frame::from_fn(8, 8, 3, |y, x, c| ((y * 3 + x + c) % 7) as f64 / 16.0);
        let minor = Frame::from_fn(8, 8, 3, |y, x, c| ((y + 2 * x + c) % 5) as f64 / 16.0);
        let target = Frame::from_fn(8, 8, 3, |y, x, _| ((y + x) % 4) as f64 / 16.0);
        let a = compute_confidence(&main, &minor, &target, 0.02).unwrap();
        // dyadic values keep the shifted distances exact
        let shift = |f: &Frame| f.map(|v| v + 0.25);
        let b = compute_confidence(&shift(&main), &shift(&minor), &shift(&target), 0.02).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auto_stop_examples() {
        assert!(auto_stop_check(&[0.5; 5], 5, 1e-8).unwrap());
        assert!(!auto_stop_check(&[1.0, 0.8, 0.6, 0.4, 0.2], 5, 1e-8).unwrap());
        assert!(!auto_stop_check(&[0.5; 3], 5, 1e-8).unwrap());
        assert!(auto_stop_check(&[0.5, f64::NAN], 2, 1e-8).is_err());
        assert!(auto_stop_check(&[0.5; 3], 1, 1e-8).is_err());
    }

    #[test]
    fn auto_stop_variance_value() {
        // normalized window [1, .8, .6, .4, .2] has variance 0.08
        assert!(auto_stop_check(&[1.0, 0.8, 0.6, 0.4, 0.2], 5, 0.0801).unwrap());
        assert!(!auto_stop_check(&[1.0, 0.8, 0.6, 0.4, 0.2], 5, 0.0799).unwrap());
    }
}
