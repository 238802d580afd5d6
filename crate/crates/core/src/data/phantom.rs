//! Procedural intensity images in `[0, 1]` used as ground-truth sources:
//! ramps, disks, checkerboards and digit-like strokes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single deterministic patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Pattern {
    /// Linear ramp from `from` to `to` across columns (or rows).
    Ramp { from: f64, to: f64, vertical: bool },
    /// Filled disk of intensity `inside` on `outside`.
    Disk { inside: f64, outside: f64, cy: f64, cx: f64, radius: f64 },
    Checkerboard { cell: usize, low: f64, high: f64 },
}

impl Pattern {
    pub fn render(&self, height: usize, width: usize) -> Result<Vec<f64>> {
        if height == 0 || width == 0 {
            return Err(Error::Config("pattern dimensions must be positive".into()));
        }
        let mut out = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                out.push(match *self {
                    Pattern::Ramp { from, to, vertical } => {
                        let (i, n) = if vertical { (y, height) } else { (x, width) };
                        let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                        from + (to - from) * t
                    }
                    Pattern::Disk { inside, outside, cy, cx, radius } => {
                        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                        if dy * dy + dx * dx <= radius * radius {
                            inside
                        } else {
                            outside
                        }
                    }
                    Pattern::Checkerboard { cell, low, high } => {
                        let cell = cell.max(1);
                        if (y / cell + x / cell) % 2 == 0 {
                            low
                        } else {
                            high
                        }
                    }
                });
            }
        }
        if out.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("pattern intensities must lie in [0, 1]".into()));
        }
        Ok(out)
    }
}

/// Families of random images for datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ramps,
    Disks,
    /// Alternating ramps and disks.
    RampsDisks,
    Checkerboards,
    Strokes,
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ramps" => Family::Ramps,
            "disks" => Family::Disks,
            "ramps-disks" => Family::RampsDisks,
            "checkerboards" => Family::Checkerboards,
            "strokes" => Family::Strokes,
            _ => return Err(Error::Config(format!("unknown image family {s:?}"))),
        })
    }
}

/// Ramp along a random direction between two random levels.
pub fn random_ramp<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (a, b) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    let (dy, dx) = angle.sin_cos();
    let proj = |y: usize, x: usize| y as f64 * dy + x as f64 * dx;
    let corners = [proj(0, 0), proj(height - 1, 0), proj(0, width - 1), proj(height - 1, width - 1)];
    let lo = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let t = (proj(y, x) - lo) / span;
            out.push((a + (b - a) * t).clamp(0.0, 1.0));
        }
    }
    out
}

/// One to three disks of random level on a random background.
pub fn random_disks<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let background = rng.gen_range(0.0..1.0);
    let mut out = vec![background; height * width];
    let size = height.min(width) as f64;
    for _ in 0..rng.gen_range(1..=3) {
        let level = rng.gen_range(0.0..1.0);
        let radius = rng.gen_range(0.12..0.3) * size;
        let cy = rng.gen_range(0.0..height as f64);
        let cx = rng.gen_range(0.0..width as f64);
        for y in 0..height {
            for x in 0..width {
                let (ddy, ddx) = (y as f64 - cy, x as f64 - cx);
                if ddy * ddy + ddx * ddx <= radius * radius {
                    out[y * width + x] = level;
                }
            }
        }
    }
    out
}

pub fn random_checkerboard<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let cell = rng.gen_range(3..=(height.min(width) / 2).max(3));
    let (low, high) = (rng.gen_range(0.0..0.5), rng.gen_range(0.5..1.0));
    Pattern::Checkerboard { cell, low, high }.render(height, width).expect("levels in range")
}

/// Thick bright polyline strokes on a dark background, loosely digit-like.
pub fn random_strokes<R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; height * width];
    let size = height.min(width) as f64;
    let thickness = (0.07 * size).max(1.0);
    let mut p = (rng.gen_range(0.25..0.75) * height as f64, rng.gen_range(0.25..0.75) * width as f64);
    for _ in 0..rng.gen_range(2..=4) {
        let q = (rng.gen_range(0.15..0.85) * height as f64, rng.gen_range(0.15..0.85) * width as f64);
        for y in 0..height {
            for x in 0..width {
                if segment_distance((y as f64, x as f64), p, q) <= thickness {
                    out[y * width + x] = 1.0;
                }
            }
        }
        p = q;
    }
    out
}

fn segment_distance(pt: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vy, vx) = (b.0 - a.0, b.1 - a.1);
    let len2 = vy * vy + vx * vx;
    let t = if len2 > 0.0 { (((pt.0 - a.0) * vy + (pt.1 - a.1) * vx) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dy, dx) = (pt.0 - a.0 - t * vy, pt.1 - a.1 - t * vx);
    (dy * dy + dx * dx).sqrt()
}

/// `count` intensity images of `family`; image `i` depends only on
/// `(seed, i)`.
pub fn generate(family: Family, count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if height < 2 || width < 2 {
        return Err(Error::Config("generated images must be at least 2x2".into()));
    }
    Ok((0..count)
        .map(|i| {
            let rng = &mut crate::rng::stream(seed, i as u64);
            match family {
                Family::Ramps => random_ramp(height, width, rng),
                Family::Disks => random_disks(height, width, rng),
                Family::RampsDisks if i % 2 == 0 => random_ramp(height, width, rng),
                Family::RampsDisks => random_disks(height, width, rng),
                Family::Checkerboards => random_checkerboard(height, width, rng),
                Family::Strokes => random_strokes(height, width, rng),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patterns_render_expected_levels() {
        let ramp = Pattern::Ramp { from: 0.0, to: 1.0, vertical: false }.render(2, 5).unwrap();
        assert_eq!(&ramp[..5], &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let disk = Pattern::Disk { inside: 0.9, outside: 0.1, cy: 2.0, cx: 2.0, radius: 1.0 }.render(5, 5).unwrap();
        assert_eq!(disk[12], 0.9);
        assert_eq!(disk[0], 0.1);
        let cb = Pattern::Checkerboard { cell: 2, low: 0.0, high: 1.0 }.render(4, 4).unwrap();
        assert_eq!(cb, vec![0., 0., 1., 1., 0., 0., 1., 1., 1., 1., 0., 0., 1., 1., 0., 0.]);
        assert!(Pattern::Ramp { from: 0.0, to: 2.0, vertical: true }.render(3, 3).is_err());
    }

    #[test]
    fn families_stay_in_range_and_are_seeded() {
        for family in [Family::Ramps, Family::Disks, Family::RampsDisks, Family::Checkerboards, Family::Strokes] {
            let a = generate(family, 6, 20, 24, 9).unwrap();
            assert_eq!(a, generate(family, 6, 20, 24, 9).unwrap());
            assert!(a.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            assert!(a.iter().all(|img| img.len() == 480));
        }
        assert_eq!("ramps-disks".parse::<Family>().unwrap(), Family::RampsDisks);
    }
}
