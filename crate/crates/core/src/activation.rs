//! QCFS (quantization clip-floor-shift) and ReLU activations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Output threshold `lambda` and quantization level `levels` of a QCFS layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcfsParams {
    pub lambda: f64,
    pub levels: u32,
}

impl QcfsParams {
    pub fn new(lambda: f64, levels: u32) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        if levels < 1 {
            return Err(Error::InvalidConfig(
                "quantization level L must be at least 1".into(),
            ));
        }
        Ok(Self { lambda, levels })
    }

    /// Spacing between adjacent output levels, `lambda / L`.
    pub fn step(&self) -> f64 {
        self.lambda / f64::from(self.levels)
    }
}

/// `lambda * clip(floor(z L / lambda + 0.5) / L, 0, 1)`.
///
/// Output is one of `0, lambda/L, ..., lambda`. Inputs exactly on a breakpoint
/// take the upper level.
#[inline]
pub fn qcfs(z: f64, params: &QcfsParams) -> f64 {
    let l = f64::from(params.levels);
    let k = (z * l / params.lambda + 0.5).floor().clamp(0.0, l);
    params.lambda * (k / l)
}

/// Straight-through gradient of [`qcfs`]: the gradient of its clip envelope,
/// 1 on `0 < z < lambda` and 0 elsewhere.
#[inline]
pub fn qcfs_ste_grad(z: f64, params: &QcfsParams) -> f64 {
    if z > 0.0 && z < params.lambda {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lambda: f64, levels: u32) -> QcfsParams {
        QcfsParams::new(lambda, levels).unwrap()
    }

    #[test]
    fn qcfs_examples() {
        assert_eq!(qcfs(0.3, &p(1.0, 4)), 0.25);
        assert_eq!(qcfs(-0.2, &p(1.0, 4)), 0.0);
        assert_eq!(qcfs(5.0, &p(1.0, 4)), 1.0);
        assert_eq!(qcfs(0.125, &p(1.0, 8)), 0.125);
    }

    #[test]
    fn qcfs_breakpoint_takes_upper_level() {
        // z L / lambda + 0.5 == 1 exactly
        assert_eq!(qcfs(0.125, &p(1.0, 4)), 0.25);
        assert_eq!(qcfs(0.124_999_999, &p(1.0, 4)), 0.0);
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(1.5), 1.5);
        assert_eq!(relu(-1.5), 0.0);
        assert_eq!(relu(0.0), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(QcfsParams::new(0.0, 4).is_err());
        assert!(QcfsParams::new(1.0, 0).is_err());
        assert!(QcfsParams::new(f64::INFINITY, 4).is_err());
    }

    #[test]
    fn quantization_error_bound() {
        for &levels in &[2u32, 4, 8, 16, 32] {
            let params = p(1.7, levels);
            let bound = params.lambda / (2.0 * f64::from(levels));
            for i in 0..=10_000 {
                let z = params.lambda * f64::from(i) / 10_000.0;
                let err = (qcfs(z, &params) - z.clamp(0.0, params.lambda)).abs();
                assert!(err <= bound + 1e-12, "L={levels} z={z} err={err}");
            }
        }
    }

    #[test]
    fn ste_matches_clip_envelope_finite_difference() {
        let params = p(1.3, 4);
        let h = 1e-6;
        let clip = |z: f64| z.clamp(0.0, params.lambda);
        for i in 0..200 {
            let z = -0.5 + 2.5 * f64::from(i) / 199.0;
            if (z.abs() < 1e-3) || ((z - params.lambda).abs() < 1e-3) {
                continue;
            }
            let fd = (clip(z + h) - clip(z - h)) / (2.0 * h);
            assert!((fd - qcfs_ste_grad(z, &params)).abs() < 1e-4, "z={z}");
        }
    }

    proptest! {
        #[test]
        fn qcfs_output_is_a_level(z in -10.0f64..10.0, lambda in 0.01f64..5.0, levels in 1u32..64) {
            let params = p(lambda, levels);
            let out = qcfs(z, &params);
            prop_assert!(out >= 0.0 && out <= lambda);
            let k = out / params.step();
            prop_assert!((k - k.round()).abs() < 1e-9);
        }

        #[test]
        fn qcfs_is_monotone(a in -10.0f64..10.0, b in -10.0f64..10.0, lambda in 0.01f64..5.0, levels in 1u32..64) {
            let params = p(lambda, levels);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(qcfs(lo, &params) <= qcfs(hi, &params));
        }

        #[test]
        fn qcfs_constant_within_a_step(k in 0u32..8, frac in 0.001f64..0.999, lambda in 0.1f64..3.0) {
            let params = p(lambda, 8);
            // steps are the half-open intervals [(k - 0.5) lambda/L, (k + 0.5) lambda/L)
            let lo = (f64::from(k) - 0.5) * params.step();
            let z = lo + frac * params.step();
            let mid = lo + 0.5 * params.step();
            prop_assert_eq!(qcfs(z, &params), qcfs(mid, &params));
        }
    }
}
