//! Gamma-family special functions used by the density, the ML estimator and
//! the sampler tests.

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural logarithm of the gamma function for `x > 0`.
///
/// Lanczos approximation (g = 7, nine coefficients); arguments below 0.5 go
/// through the reflection formula so the series is always evaluated at
/// `x >= 0.5`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma_pos(x))
}

pub(crate) fn ln_gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // Gamma(x) Gamma(1 - x) = pi / sin(pi x); sin(pi x) > 0 on (0, 0.5).
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma_pos(1.0 - x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Digamma `psi(x)` for `x > 0`: recurrence up to `x >= 10`, then the
/// asymptotic series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_pos(x))
}

pub(crate) fn digamma_pos(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_2k / (2k) series
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * 691.0 / 32_760.0)))));
    shift + x.ln() - 0.5 * inv - series
}

/// Trigamma `psi'(x)` for `x > 0`, same shift-then-asymptotic scheme.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("trigamma requires x > 0, got {x}")));
    }
    Ok(trigamma_pos(x))
}

pub(crate) fn trigamma_pos(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    shift + series
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn log_gamma_known_values() {
        assert_abs_diff_eq!(log_gamma(1.0).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(log_gamma(2.0).unwrap(), 0.0, epsilon = 1e-14);
        let half = 0.5 * std::f64::consts::PI.ln();
        assert_abs_diff_eq!(log_gamma(0.5).unwrap(), half, epsilon = 1e-13);
        assert_abs_diff_eq!(log_gamma(10.0).unwrap(), 362_880f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn log_gamma_factorials_and_recurrence() {
        // ln Gamma(n) = ln (n-1)! over the integers, then Gamma(x+1) = x Gamma(x)
        // between them, across [1e-3, 1e3].
        let mut ln_fact = 0.0f64;
        for n in 1..=170u32 {
            let got = log_gamma(n as f64).unwrap();
            assert!((got - ln_fact).abs() < 1e-12 * ln_fact.abs().max(1.0), "n = {n}");
            ln_fact += (n as f64).ln();
        }
        let mut x = 1e-3;
        while x < 1e3 {
            let lhs = log_gamma(x + 1.0).unwrap();
            let rhs = log_gamma(x).unwrap() + x.ln();
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0), "x = {x}");
            x *= 1.37;
        }
    }

    #[test]
    fn log_gamma_rejects_nonpositive() {
        assert!(matches!(log_gamma(0.0), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(-2.5), Err(Error::Domain(_))));
        assert!(matches!(log_gamma(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn digamma_matches_log_gamma_derivative() {
        for &x in &[0.05f64, 0.3, 1.0, 2.5, 7.0, 40.0] {
            let h = 1e-5 * x.max(1.0);
            let fd = (ln_gamma_pos(x + h) - ln_gamma_pos(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(digamma(x).unwrap(), fd, epsilon = 1e-7 * (1.0 + fd.abs()));
        }
        // psi(1) = -euler gamma
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -0.577_215_664_901_532_9, epsilon = 1e-14);
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert_abs_diff_eq!(trigamma(1.0).unwrap(), pi2_6, epsilon = 1e-13);
        assert_abs_diff_eq!(trigamma(0.5).unwrap(), 3.0 * pi2_6, epsilon = 1e-12);
        for &x in &[0.2, 1.7, 9.0] {
            let h = 1e-5;
            let fd = (digamma_pos(x + h) - digamma_pos(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(trigamma(x).unwrap(), fd, epsilon = 1e-6 * fd);
        }
    }
}
