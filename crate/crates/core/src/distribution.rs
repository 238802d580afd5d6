//! The Nakagami envelope distribution: density, log-density, score with
//! respect to the envelope value, sampling and scattering-regime labels.

use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_gamma_pos;

/// Shape `m` and scale `omega = E[R^2]` of a Nakagami distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NakagamiParams {
    m: f64,
    omega: f64,
}

impl NakagamiParams {
    pub fn new(m: f64, omega: f64) -> Result<Self> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Domain(format!("shape m must be positive, got {m}")));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::Domain(format!("scale omega must be positive, got {omega}")));
        }
        Ok(Self { m, omega })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn regime(&self) -> Regime {
        regime_of(self.m)
    }
}

/// One envelope amplitude `r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EnvelopeSample(f64);

impl EnvelopeSample {
    pub fn new(r: f64) -> Result<Self> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("envelope sample must be >= 0, got {r}")));
        }
        Ok(Self(r))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Backscatter statistics class indexed by the shape parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    PreRayleigh,
    Rayleigh,
    PostRayleigh,
}

const RAYLEIGH_TOL: f64 = 1e-9;

pub fn regime_of(m: f64) -> Regime {
    if (m - 1.0).abs() <= RAYLEIGH_TOL {
        Regime::Rayleigh
    } else if m < 1.0 {
        Regime::PreRayleigh
    } else {
        Regime::PostRayleigh
    }
}

fn log_normalizer(p: &NakagamiParams) -> f64 {
    std::f64::consts::LN_2 - ln_gamma_pos(p.m) + p.m * p.m.ln() - p.m * p.omega.ln()
}

/// Density of the envelope at `sample`. Zero at `r = 0` unless `m < 1/2`,
/// where the density diverges and `+inf` is returned.
pub fn pdf(sample: EnvelopeSample, params: &NakagamiParams) -> f64 {
    let r = sample.value();
    if r == 0.0 {
        let exponent = 2.0 * params.m - 1.0;
        return if exponent > 0.0 {
            0.0
        } else if exponent == 0.0 {
            log_normalizer(params).exp()
        } else {
            f64::INFINITY
        };
    }
    log_pdf_unchecked(r, params).exp()
}

/// Log-density for `r > 0`.
pub fn log_pdf(sample: EnvelopeSample, params: &NakagamiParams) -> Result<f64> {
    let r = positive(sample, "log_pdf")?;
    Ok(log_pdf_unchecked(r, params))
}

pub(crate) fn log_pdf_unchecked(r: f64, p: &NakagamiParams) -> f64 {
    log_normalizer(p) + (2.0 * p.m - 1.0) * r.ln() - p.m / p.omega * r * r
}

/// `d/dr log p(r) = (2m - 1)/r - 2 m r / omega` for `r > 0`.
pub fn analytic_score(sample: EnvelopeSample, params: &NakagamiParams) -> Result<f64> {
    let r = positive(sample, "analytic_score")?;
    Ok(score_unchecked(r, params.m, params.omega))
}

#[inline]
pub(crate) fn score_unchecked(r: f64, m: f64, omega: f64) -> f64 {
    (2.0 * m - 1.0) / r - 2.0 * m * r / omega
}

fn positive(sample: EnvelopeSample, op: &str) -> Result<f64> {
    let r = sample.value();
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::Domain(format!("{op} requires r > 0, got {r}")))
    }
}

/// Gamma(shape, scale = 1) variate by the Marsaglia–Tsang squeeze method;
/// shapes below one use `X_a = X_{a+1} U^{1/a}`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boost: f64 = rng.sample(Open01);
        return sample_gamma(shape + 1.0, rng) * boost.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let u: f64 = rng.sample(Open01);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// One envelope draw: `R = sqrt(X)`, `X ~ Gamma(m, omega / m)`.
#[inline]
pub fn sample_one<R: Rng + ?Sized>(params: &NakagamiParams, rng: &mut R) -> f64 {
    (sample_gamma(params.m, rng) * params.omega / params.m).sqrt()
}

/// `count` i.i.d. envelope draws.
pub fn sample<R: Rng + ?Sized>(
    params: &NakagamiParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<EnvelopeSample>> {
    if count == 0 {
        return Err(Error::Domain("sample count must be at least 1".into()));
    }
    Ok((0..count).map(|_| EnvelopeSample(sample_one(params, rng))).collect())
}
