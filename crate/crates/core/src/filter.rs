//! Mask-aware low-pass filters over parameter maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Padding, ParamMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LowPass {
    /// Median of the valid values in a `k x k` window (lower median for even counts).
    Median(usize),
    /// Mean of the valid values in a `k x k` window.
    Average(usize),
    None,
}

impl LowPass {
    pub fn kernel(&self) -> Option<usize> {
        match *self {
            LowPass::Median(k) | LowPass::Average(k) => Some(k),
            LowPass::None => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kernel() {
            Some(k) if k == 0 || k % 2 == 0 => {
                Err(Error::Config(format!("filter kernel must be odd and positive, got {k}")))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for LowPass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LowPass::Median(k) => write!(f, "median:{k}"),
            LowPass::Average(k) => write!(f, "average:{k}"),
            LowPass::None => write!(f, "none"),
        }
    }
}

impl std::str::FromStr for LowPass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("filter must be median:k, average:k or none, got {s:?}"));
        if s == "none" {
            return Ok(LowPass::None);
        }
        let (kind, k) = s.split_once(':').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        let filter = match kind.trim() {
            "median" => LowPass::Median(k),
            "average" => LowPass::Average(k),
            _ => return Err(bad()),
        };
        filter.validate()?;
        Ok(filter)
    }
}

impl TryFrom<String> for LowPass {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<LowPass> for String {
    fn from(f: LowPass) -> String {
        f.to_string()
    }
}

/// Applies `filter` over the valid pixels of `map` with reflect padding.
///
/// Invalid pixels that have at least one valid neighbour receive the filtered
/// value; pixels whose whole window is invalid stay invalid.
pub fn lowpass(map: &ParamMap, filter: LowPass) -> Result<ParamMap> {
    filter.validate()?;
    let Some(k) = filter.kernel() else {
        return Ok(map.clone());
    };
    let (h, w) = map.shape();
    if k > h.min(w) {
        return Err(Error::Config(format!("filter kernel {k} exceeds map {h}x{w}")));
    }
    let half = (k / 2) as isize;
    let mut buf = Vec::with_capacity(k * k);
    let mut cells = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for dy in -half..=half {
                let yy = Padding::Reflect.index(y as isize + dy, h);
                for dx in -half..=half {
                    let xx = Padding::Reflect.index(x as isize + dx, w);
                    if let Some(v) = map.get(yy, xx) {
                        buf.push(v);
                    }
                }
            }
            cells.push(if buf.is_empty() {
                None
            } else {
                Some(match filter {
                    LowPass::Median(_) => {
                        buf.sort_unstable_by(f64::total_cmp);
                        buf[(buf.len() - 1) / 2]
                    }
                    _ => buf.iter().sum::<f64>() / buf.len() as f64,
                })
            });
        }
    }
    ParamMap::from_options(h, w, cells)
}
