//! Log-gamma and the regularized incomplete beta function.
//!
//! `betainc_reg` backs the Student-t and F tail probabilities in the
//! analysis module; both are classical algorithms (Lanczos approximation,
//! Lentz continued fraction).

/// Lanczos coefficients for g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// Natural log of the gamma function for `x > 0`.
///
/// Relative error is below 1e-13 over the tested range (0.5 to 170).
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection keeps the Lanczos argument away from zero.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function `I_x(a, b)` for `x ∈ [0, 1]`.
pub fn betainc_reg(x: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0, "betainc_reg requires a, b > 0");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // The prefactor is symmetric in (x, a, b) <-> (1-x, b, a).
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_beta(a, b);
    // The continued fraction converges fastest for x < (a+1)/(a+b+2);
    // otherwise evaluate the symmetric complement directly.
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() / a) * beta_cf(x, a, b)
    } else {
        1.0 - (ln_front.exp() / b) * beta_cf(1.0 - x, b, a)
    }
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Lentz's algorithm for the incomplete beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Two-sided p-value for a Student-t statistic with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    betainc_reg(x, 0.5 * df, 0.5)
}

/// Upper tail probability of the F distribution.
pub fn f_upper_tail_p(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    let x = df2 / (df2 + df1 * f);
    betainc_reg(x, 0.5 * df2, 0.5 * df1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_reference_values() {
        let cases = [
            (0.5, 0.57236494292470008707),
            (1.0, 0.0),
            (1.5, -0.12078223763524522235),
            (2.0, 0.0),
            (3.7, 1.4280723266653879219),
            (10.0, 12.801827480081469611),
            (25.25, 55.585686044869429708),
            (100.0, 359.13420536957539878),
            (170.6, 704.51803712799877179),
        ];
        for (x, want) in cases {
            assert_relative_eq!(ln_gamma(x), want, max_relative = 1e-13, epsilon = 1e-13);
        }
    }

    #[test]
    fn betainc_reference_values() {
        let cases = [
            (0.3, 2.0, 3.0, 0.3483),
            (0.5, 0.5, 0.5, 0.5),
            (0.9, 5.0, 1.5, 0.77617213431621560597),
            (0.05, 10.0, 10.0, 5.9393390596643791199e-9),
            (0.7, 0.8, 4.2, 0.99573956808743722326),
        ];
        for (x, a, b, want) in cases {
            assert_relative_eq!(betainc_reg(x, a, b), want, max_relative = 1e-12);
        }
        assert_eq!(betainc_reg(0.0, 2.0, 2.0), 0.0);
        assert_eq!(betainc_reg(1.0, 2.0, 2.0), 1.0);
    }

    #[test]
    fn betainc_complement_symmetry() {
        for &(x, a, b) in &[(0.23, 1.7, 4.1), (0.77, 0.6, 0.9), (0.5, 12.0, 3.0)] {
            let lhs = betainc_reg(x, a, b);
            let rhs = 1.0 - betainc_reg(1.0 - x, b, a);
            assert_relative_eq!(lhs, rhs, epsilon = 1e-13);
        }
    }
}
