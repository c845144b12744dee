//! Scalar log-density kernels, positive-constraint transforms and small
//! statistical utilities shared by the model, sampler and analysis layers.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * `Gamma(shape, rate)` — density `rate^shape x^(shape-1) e^(-rate x) / Γ(shape)`.
//! * `InvGamma(shape, scale)` — density `scale^shape x^(-shape-1) e^(-scale/x) / Γ(shape)`.
//! * `HalfCauchy(scale)` — location fixed at zero, support `x ≥ 0`.
//!
//! Positive-constrained sampler coordinates use the log transform
//! ([`to_positive`]); the additive Jacobian term equals the unconstrained
//! coordinate itself.

use crate::error::{Error, Result};

pub mod special;

use special::ln_gamma;

const LN_2PI: f64 = 1.8378770664093454836;
const LN_2_OVER_PI: f64 = -0.45158270528945486473;

/// The four distribution families the models are built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistParams {
    /// Mean and standard deviation.
    Normal { mean: f64, sd: f64 },
    /// Shape and rate.
    Gamma { shape: f64, rate: f64 },
    /// Shape and scale.
    InvGamma { shape: f64, scale: f64 },
    /// Scale; location is zero.
    HalfCauchy { scale: f64 },
}

impl DistParams {
    /// Validates the positivity constraint on the second parameter.
    pub fn validate(&self) -> Result<()> {
        let p2 = match self {
            DistParams::Normal { sd, .. } => *sd,
            DistParams::Gamma { rate, .. } => *rate,
            DistParams::InvGamma { scale, .. } => *scale,
            DistParams::HalfCauchy { scale } => *scale,
        };
        if !(p2 > 0.0) || !p2.is_finite() {
            return Err(Error::invalid(format!(
                "distribution scale/rate parameter must be positive and finite, got {p2}"
            )));
        }
        if let DistParams::Gamma { shape, .. } | DistParams::InvGamma { shape, .. } = self {
            if !(*shape > 0.0) || !shape.is_finite() {
                return Err(Error::invalid(format!(
                    "shape parameter must be positive and finite, got {shape}"
                )));
            }
        }
        Ok(())
    }

    /// Log density at `x`, with domain checks.
    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        match *self {
            DistParams::Normal { mean, sd } => log_pdf_normal(x, mean, sd),
            DistParams::Gamma { shape, rate } => log_pdf_gamma(x, shape, rate),
            DistParams::InvGamma { shape, scale } => log_pdf_inv_gamma(x, shape, scale),
            DistParams::HalfCauchy { scale } => log_pdf_half_cauchy(x, scale),
        }
    }
}

/// A positive value together with its unconstrained coordinate and the log
/// Jacobian of the transform between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedValue {
    pub unconstrained: f64,
    pub constrained: f64,
    pub log_jacobian: f64,
}

/// Log density of `Normal(mu, sd)` at `x`.
pub fn log_pdf_normal(x: f64, mu: f64, sd: f64) -> Result<f64> {
    if !x.is_finite() || !mu.is_finite() || !sd.is_finite() {
        return Err(Error::invalid(format!(
            "log_pdf_normal requires finite arguments, got x={x}, mu={mu}, sd={sd}"
        )));
    }
    if sd <= 0.0 {
        return Err(Error::invalid(format!(
            "log_pdf_normal requires sd > 0, got {sd}"
        )));
    }
    Ok(normal_ln(x, mu, sd))
}

#[inline]
pub(crate) fn normal_ln(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -sd.ln() - 0.5 * LN_2PI - 0.5 * z * z
}

/// Log density of a half-Cauchy with location zero and the given scale.
///
/// Support is `x ≥ 0`; negative `x` is a caller bug, not an underflow.
pub fn log_pdf_half_cauchy(x: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "log_pdf_half_cauchy requires scale > 0, got {scale}"
        )));
    }
    if !x.is_finite() || x < 0.0 {
        return Err(Error::invalid(format!(
            "log_pdf_half_cauchy support is x >= 0, got {x}"
        )));
    }
    Ok(half_cauchy_ln(x, scale))
}

#[inline]
pub(crate) fn half_cauchy_ln(x: f64, scale: f64) -> f64 {
    let r = x / scale;
    LN_2_OVER_PI - scale.ln() - (1.0 + r * r).ln()
}

/// Log density of `Gamma(shape, rate)` at `x > 0`.
pub fn log_pdf_gamma(x: f64, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::invalid(format!(
            "log_pdf_gamma requires shape > 0 and rate > 0, got shape={shape}, rate={rate}"
        )));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!(
            "log_pdf_gamma support is x > 0, got {x}"
        )));
    }
    Ok(gamma_ln(x, shape, rate))
}

#[inline]
pub(crate) fn gamma_ln(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of `InvGamma(shape, scale)` at `x > 0`.
pub fn log_pdf_inv_gamma(x: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::invalid(format!(
            "log_pdf_inv_gamma requires shape > 0 and scale > 0, got shape={shape}, scale={scale}"
        )));
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!(
            "log_pdf_inv_gamma support is x > 0, got {x}"
        )));
    }
    Ok(inv_gamma_ln(x, shape, scale))
}

#[inline]
pub(crate) fn inv_gamma_ln(x: f64, shape: f64, scale: f64) -> f64 {
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Maps an unconstrained coordinate to a positive value via `exp`, carrying
/// the log Jacobian of the change of variables.
pub fn to_positive(unconstrained: f64) -> Result<TransformedValue> {
    if !unconstrained.is_finite() {
        return Err(Error::invalid(format!(
            "to_positive requires a finite input, got {unconstrained}"
        )));
    }
    let constrained = unconstrained.exp();
    if !constrained.is_finite() {
        return Err(Error::NumericalFailure(format!(
            "exp overflow in to_positive at coordinate value {unconstrained}"
        )));
    }
    Ok(TransformedValue {
        unconstrained,
        constrained,
        log_jacobian: unconstrained,
    })
}

/// Cosine similarity `a·b / (‖a‖‖b‖)`, in `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "cosine_similarity requires equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid(
            "cosine similarity is undefined for a zero vector".to_string(),
        ));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature, used as an independent normalization
    /// oracle for the density kernels.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fb: f64, fm: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            simpson(f, a, m, fa, fm, flm, tol / 2.0, depth - 1)
                + simpson(f, m, b, fm, fb, frm, tol / 2.0, depth - 1)
        }
    }

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        let m = 0.5 * (a + b);
        simpson(&f, a, b, f(a), f(b), f(m), tol, 40)
    }

    #[test]
    fn normal_log_density_reference_values() {
        assert_relative_eq!(
            log_pdf_normal(0.0, 0.0, 1.0).unwrap(),
            -0.91893853320467274178,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            log_pdf_normal(1.0, 0.0, 1.0).unwrap(),
            -1.4189385332046727418,
            epsilon = 1e-12
        );
        // High-precision closed-form evaluation, frozen.
        assert_relative_eq!(
            log_pdf_normal(0.7, 0.2, 1.3).unwrap(),
            -1.2552672947135839122,
            epsilon = 1e-10
        );
    }

    #[test]
    fn normal_rejects_bad_arguments() {
        assert!(log_pdf_normal(f64::NAN, 0.0, 1.0).is_err());
        assert!(log_pdf_normal(0.0, f64::INFINITY, 1.0).is_err());
        assert!(log_pdf_normal(0.0, 0.0, 0.0).is_err());
        assert!(log_pdf_normal(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn half_cauchy_log_density_reference_values() {
        assert_relative_eq!(
            log_pdf_half_cauchy(0.0, 1.0).unwrap(),
            -0.45158270528945486473,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            log_pdf_half_cauchy(1.0, 1.0).unwrap(),
            -1.1447298858494001741,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            log_pdf_half_cauchy(2.5, 0.7).unwrap(),
            -2.7163175741524029095,
            epsilon = 1e-10
        );
    }

    #[test]
    fn half_cauchy_rejects_negative_support() {
        assert!(log_pdf_half_cauchy(-1e-9, 1.0).is_err());
        assert!(log_pdf_half_cauchy(1.0, 0.0).is_err());
    }

    #[test]
    fn gamma_log_density_reference_values() {
        assert_relative_eq!(log_pdf_gamma(1.0, 1.0, 1.0).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(
            log_pdf_gamma(2.0, 3.0, 1.0).unwrap(),
            -1.3068528194400546906,
            epsilon = 1e-10
        );
        // Exponential density approaches its rate at the origin.
        assert_relative_eq!(
            log_pdf_gamma(1e-300, 1.0, 2.0).unwrap(),
            2.0f64.ln(),
            epsilon = 1e-10
        );
        assert!(log_pdf_gamma(0.0, 1.0, 1.0).is_err());
        assert!(log_pdf_gamma(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn inv_gamma_log_density_reference_values() {
        assert_relative_eq!(
            log_pdf_inv_gamma(1.0, 1.0, 1.0).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            log_pdf_inv_gamma(2.0, 2.0, 2.0).unwrap(),
            -1.6931471805599453094,
            epsilon = 1e-10
        );
        assert!(log_pdf_inv_gamma(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn inv_gamma_density_normalizes_by_quadrature() {
        // Substitute x = e^t so the infinite support becomes a finite window.
        let f = |t: f64| log_pdf_inv_gamma(t.exp(), 2.0, 2.0).unwrap().exp() * t.exp();
        let integral = integrate(f, -30.0, 30.0, 1e-10);
        assert_relative_eq!(integral, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn to_positive_fixed_points() {
        let t = to_positive(0.0).unwrap();
        assert_eq!(t.constrained, 1.0);
        assert_eq!(t.log_jacobian, 0.0);

        let t = to_positive(2.0f64.ln()).unwrap();
        assert_relative_eq!(t.constrained, 2.0, epsilon = 1e-14);
        assert_relative_eq!(t.log_jacobian, 2.0f64.ln(), epsilon = 1e-14);

        for c in [1e-6f64, 1.0, 1e6] {
            let t = to_positive(c.ln()).unwrap();
            assert_relative_eq!(t.constrained, c, max_relative = 1e-12);
        }
    }

    #[test]
    fn to_positive_rejects_overflow_and_non_finite() {
        assert!(to_positive(f64::NAN).is_err());
        assert!(to_positive(f64::INFINITY).is_err());
        match to_positive(800.0) {
            Err(Error::NumericalFailure(msg)) => assert!(msg.contains("800")),
            other => panic!("expected overflow error, got {other:?}"),
        }
    }

    #[test]
    fn cosine_similarity_reference_values() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_relative_eq!(
            cosine_similarity(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap(),
            -1.0,
            epsilon = 1e-14
        );
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dist_params_dispatch_matches_free_functions() {
        let d = DistParams::Gamma { shape: 2.0, rate: 0.5 };
        assert_eq!(d.log_pdf(1.3).unwrap(), log_pdf_gamma(1.3, 2.0, 0.5).unwrap());
        let bad = DistParams::Normal { mean: 0.0, sd: -1.0 };
        assert!(bad.log_pdf(0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn normal_density_normalizes(mu in -2.0..2.0f64, sd in 0.3..3.0f64) {
            let f = |x: f64| log_pdf_normal(x, mu, sd).unwrap().exp();
            let integral = integrate(f, mu - 14.0 * sd, mu + 14.0 * sd, 1e-10);
            prop_assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
        }

        #[test]
        fn half_cauchy_density_normalizes(scale in 0.3..3.0f64) {
            // Substitute x = scale·tan(t); the image of [0, π/2) covers the support.
            let f = |t: f64| {
                let x = scale * t.tan();
                let dx = scale / t.cos().powi(2);
                log_pdf_half_cauchy(x, scale).unwrap().exp() * dx
            };
            let integral = integrate(f, 0.0, std::f64::consts::FRAC_PI_2 - 1e-9, 1e-10);
            prop_assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
        }

        #[test]
        fn gamma_density_normalizes(shape in 0.5..5.0f64, rate in 0.3..3.0f64) {
            let f = |t: f64| log_pdf_gamma(t.exp(), shape, rate).unwrap().exp() * t.exp();
            let integral = integrate(f, -40.0, 12.0, 1e-10);
            prop_assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
        }

        #[test]
        fn inv_gamma_density_normalizes(shape in 0.5..5.0f64, scale in 0.3..3.0f64) {
            let f = |t: f64| log_pdf_inv_gamma(t.exp(), shape, scale).unwrap().exp() * t.exp();
            let integral = integrate(f, -12.0, 40.0, 1e-10);
            prop_assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
        }

        #[test]
        fn half_cauchy_scales_like_a_scale_family(x in 0.0..50.0f64, s in 0.1..10.0f64) {
            let lhs = log_pdf_half_cauchy(x, s).unwrap();
            let rhs = log_pdf_half_cauchy(x / s, 1.0).unwrap() - s.ln();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn to_positive_round_trips(u in -300.0..300.0f64) {
            let t = to_positive(u).unwrap();
            prop_assert!(t.constrained > 0.0);
            prop_assert!((t.constrained.ln() - u).abs() <= 1e-12 * u.abs().max(1.0));
            prop_assert_eq!(t.log_jacobian, u);
        }

        #[test]
        fn cosine_similarity_scale_and_sign(
            a in proptest::collection::vec(-5.0..5.0f64, 3..8),
            kappa in 0.1..10.0f64,
        ) {
            prop_assume!(a.iter().any(|&x| x.abs() > 1e-3));
            let b: Vec<f64> = a.iter().map(|&x| x + 1.0).collect();
            prop_assume!(b.iter().any(|&x| x.abs() > 1e-3));
            let scaled: Vec<f64> = a.iter().map(|&x| kappa * x).collect();
            let negated: Vec<f64> = a.iter().map(|&x| -x).collect();
            let base = cosine_similarity(&a, &b).unwrap();
            prop_assert!((cosine_similarity(&scaled, &b).unwrap() - base).abs() < 1e-10);
            prop_assert!((cosine_similarity(&negated, &b).unwrap() + base).abs() < 1e-10);
        }
    }
}
