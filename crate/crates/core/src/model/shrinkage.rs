//! The two scalar kernels of the regularised horseshoe prior.

use crate::error::{Error, Result};

/// Standard deviation of the regularised horseshoe slab-and-shrinkage
/// compromise: `sqrt(c2 τ² λ² / (c2 + τ² λ²))`.
///
/// The result is capped by both `sqrt(c2)` (the slab width) and `τλ` (the
/// unregularised horseshoe scale), approaching whichever is smaller.
pub fn regularized_scale(lambda: f64, tau: f64, c2: f64) -> Result<f64> {
    for (name, v) in [("lambda", lambda), ("tau", tau), ("c2", c2)] {
        if !(v > 0.0) {
            return Err(Error::invalid(format!(
                "regularized_scale requires {name} > 0, got {v}"
            )));
        }
    }
    let tl2 = tau * tau * lambda * lambda;
    Ok((c2 * tl2 / (c2 + tl2)).sqrt())
}

/// Base scale of the per-view global shrinkage parameter:
/// `p0 / (dim - p0) / sqrt(n · precision)`.
///
/// `p0` is the prior guess of the number of relevant features among `dim`,
/// `n` the sample count and `precision` the view's noise precision.
pub fn global_shrinkage_scale(p0: f64, dim: usize, n: usize, precision: f64) -> Result<f64> {
    if !(p0 > 0.0) || p0 >= dim as f64 {
        return Err(Error::invalid(format!(
            "relevant-feature guess must lie in (0, {dim}), got {p0}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if !(precision > 0.0) {
        return Err(Error::invalid(format!(
            "noise precision must be positive, got {precision}"
        )));
    }
    Ok(p0 / (dim as f64 - p0) / (n as f64 * precision).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn regularized_scale_reference_values() {
        assert_relative_eq!(
            regularized_scale(1.0, 1.0, 1.0).unwrap(),
            0.7071067811865475244,
            epsilon = 1e-14
        );
        // Slab-dominated limit: huge c2 leaves the plain horseshoe scale.
        assert_relative_eq!(
            regularized_scale(1.0, 1.0, 1e12).unwrap(),
            1.0,
            max_relative = 1e-6
        );
        // Regularisation cap: huge local scale saturates at sqrt(c2).
        assert_relative_eq!(
            regularized_scale(1e9, 1.0, 4.0).unwrap(),
            2.0,
            max_relative = 1e-6
        );
        assert!(regularized_scale(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn global_shrinkage_scale_reference_values() {
        assert_relative_eq!(
            global_shrinkage_scale(20.0, 60, 150, 1.0 / 9.0).unwrap(),
            0.12247448713915890491,
            epsilon = 1e-14
        );
        // p0 = dim/2 makes the prefactor one.
        assert_relative_eq!(
            global_shrinkage_scale(25.0, 50, 200, 1.0).unwrap(),
            1.0 / 200.0f64.sqrt(),
            epsilon = 1e-14
        );
        assert!(global_shrinkage_scale(60.0, 60, 150, 1.0).is_err());
        assert!(global_shrinkage_scale(61.0, 60, 150, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn scale_below_both_caps(
            lambda in 1e-3..1e3f64,
            tau in 1e-3..1e3f64,
            c2 in 1e-3..1e3f64,
        ) {
            let s = regularized_scale(lambda, tau, c2).unwrap();
            prop_assert!(s > 0.0);
            prop_assert!(s < c2.sqrt().min(tau * lambda) + 1e-12);
        }

        #[test]
        fn scale_monotone_in_each_argument(
            lambda in 1e-2..1e2f64,
            tau in 1e-2..1e2f64,
            c2 in 1e-2..1e2f64,
            bump in 1.01..4.0f64,
        ) {
            let base = regularized_scale(lambda, tau, c2).unwrap();
            prop_assert!(regularized_scale(lambda * bump, tau, c2).unwrap() > base);
            prop_assert!(regularized_scale(lambda, tau * bump, c2).unwrap() > base);
            prop_assert!(regularized_scale(lambda, tau, c2 * bump).unwrap() > base);
        }

        #[test]
        fn doubled_precision_shrinks_by_sqrt2(p0 in 1.0..19.0f64, rho in 0.01..100.0f64) {
            let a = global_shrinkage_scale(p0, 20, 64, rho).unwrap();
            let b = global_shrinkage_scale(p0, 20, 64, 2.0 * rho).unwrap();
            prop_assert!((a / b - 2.0f64.sqrt()).abs() < 1e-12);
        }
    }
}
