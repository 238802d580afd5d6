//! Closed-form per-pixel Nakagami estimation from the score of the envelope.
//!
//! Differentiating the log-density in `r` gives
//! `s(r) = (2m - 1)/r - 2 m r / omega`, which is linear in `m`; solving for
//! `m` yields `m = (1/r + s) / (2/r - 2r/omega)`. With a learned score in
//! place of `s` and `omega` estimated as `E[R^2]`, this is applied to every
//! pixel and the raw map is then low-pass filtered.

use serde::{Deserialize, Serialize};

use crate::classical::DEFAULT_CLAMP;
use crate::error::{Error, Result};
use crate::filter::{lowpass, LowPass};
use crate::image::{EnvelopeImage, Padding, ParamMap};

const R_MIN_FACTOR: f64 = 1e-6;

/// How `omega = E[R^2]` is estimated for the inversion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OmegaMode {
    /// One mean of `r^2` over the whole image.
    Global,
    /// Reflect-padded `k x k` window mean of `r^2`.
    Local(usize),
    Fixed(f64),
}

impl std::fmt::Display for OmegaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OmegaMode::Global => write!(f, "global"),
            OmegaMode::Local(k) => write!(f, "local:{k}"),
            OmegaMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl std::str::FromStr for OmegaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("omega must be global, local:k or fixed:v, got {s:?}"));
        if s == "global" {
            return Ok(OmegaMode::Global);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "local" => {
                let k: usize = arg.parse().map_err(|_| bad())?;
                if k == 0 || k % 2 == 0 {
                    return Err(bad());
                }
                Ok(OmegaMode::Local(k))
            }
            "fixed" => {
                let v: f64 = arg.parse().map_err(|_| bad())?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(bad());
                }
                Ok(OmegaMode::Fixed(v))
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for OmegaMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OmegaMode> for String {
    fn from(m: OmegaMode) -> String {
        m.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnicornConfig {
    pub omega_mode: OmegaMode,
    pub filter: LowPass,
    /// Relative threshold on `|1 - r^2/omega|` below which a pixel is singular.
    pub denominator_epsilon: f64,
    pub clamp: (f64, f64),
}

impl Default for UnicornConfig {
    fn default() -> Self {
        Self {
            omega_mode: OmegaMode::Global,
            filter: LowPass::Median(3),
            denominator_epsilon: 1e-3,
            clamp: DEFAULT_CLAMP,
        }
    }
}

impl UnicornConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        if !(self.denominator_epsilon > 0.0) {
            return Err(Error::Config("denominator_epsilon must be positive".into()));
        }
        if !(self.clamp.0 < self.clamp.1) {
            return Err(Error::Config(format!("clamp range {:?} is empty", self.clamp)));
        }
        Ok(())
    }
}

/// The closed-form estimate at one pixel, unclamped.
///
/// Fails with [`Error::SingularPixel`] when `|1 - r^2/omega| <= epsilon`,
/// i.e. when the denominator `2/r - 2r/omega` is within `epsilon * 2/r` of 0.
pub fn pointwise_m(r: f64, score: f64, omega_hat: f64, epsilon: f64) -> Result<f64> {
    if !(r > 0.0) || !(omega_hat > 0.0) {
        return Err(Error::Domain(format!("need r > 0 and omega > 0, got r = {r}, omega = {omega_hat}")));
    }
    let gap = 1.0 - r * r / omega_hat;
    if !(gap.abs() > epsilon) {
        return Err(Error::SingularPixel { r, omega: omega_hat });
    }
    // Numerator and denominator multiplied through by r.
    Ok((1.0 + r * score) / (2.0 * gap))
}

/// Per-pixel `omega` estimates.
pub fn estimate_omega(image: &EnvelopeImage, mode: OmegaMode) -> Result<Vec<f64>> {
    let (h, w) = image.shape();
    let omega = match mode {
        OmegaMode::Fixed(v) => {
            if !(v > 0.0) {
                return Err(Error::Config(format!("fixed omega must be positive, got {v}")));
            }
            return Ok(vec![v; h * w]);
        }
        OmegaMode::Global => vec![image.mean_square(); h * w],
        OmegaMode::Local(k) => {
            if k == 0 || k % 2 == 0 {
                return Err(Error::Config(format!("local omega window must be odd, got {k}")));
            }
            let half = (k / 2) as isize;
            let norm = (k * k) as f64;
            let mut out = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    let mut acc = 0.0;
                    for dy in -half..=half {
                        for dx in -half..=half {
                            let r = image.get_padded(y as isize + dy, x as isize + dx, Padding::Reflect);
                            acc += r * r;
                        }
                    }
                    out.push(acc / norm);
                }
            }
            out
        }
    };
    if omega.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::DegenerateWindow("mean of r^2 is zero".into()));
    }
    Ok(omega)
}

/// Raw closed-form map before filtering: singular pixels invalid, valid
/// values clamped.
pub fn raw_unicorn_map(image: &EnvelopeImage, scores: &[f64], config: &UnicornConfig) -> Result<ParamMap> {
    config.validate()?;
    let (h, w) = image.shape();
    if scores.len() != h * w {
        return Err(Error::Config(format!(
            "score image has {} values, envelope image {}x{}",
            scores.len(),
            h,
            w
        )));
    }
    let omega = estimate_omega(image, config.omega_mode)?;
    let global = omega.iter().sum::<f64>() / omega.len() as f64;
    let r_min = R_MIN_FACTOR * global.sqrt();
    let cells = image
        .data()
        .iter()
        .zip(scores)
        .zip(&omega)
        .map(|((&r, &s), &om)| {
            pointwise_m(r.max(r_min), s, om, config.denominator_epsilon)
                .ok()
                .filter(|m| m.is_finite())
        })
        .collect();
    let mut map = ParamMap::from_options(h, w, cells)?;
    map.clamp_values(config.clamp.0, config.clamp.1);
    Ok(map)
}

/// Full estimate: closed-form inversion, clamping, then the low-pass filter,
/// which also fills singular pixels from their valid neighbours.
pub fn unicorn_map(image: &EnvelopeImage, scores: &[f64], config: &UnicornConfig) -> Result<ParamMap> {
    let raw = raw_unicorn_map(image, scores, config)?;
    lowpass(&raw, config.filter)
}
