//! Row-major 2-D grids: envelope images and parameter maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary extension used by every windowed operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Mirror about the edge, repeating the edge sample (`c b a | a b c`).
    #[default]
    Reflect,
    /// Repeat the edge sample (`a a a | a b c`).
    Replicate,
}

impl Padding {
    /// Maps a possibly out-of-range coordinate onto `0..len`.
    #[inline]
    pub fn index(self, i: isize, len: usize) -> usize {
        let n = len as isize;
        match self {
            Padding::Replicate => i.clamp(0, n - 1) as usize,
            Padding::Reflect => {
                let period = 2 * n;
                let mut j = i.rem_euclid(period);
                if j >= n {
                    j = period - 1 - j;
                }
                j as usize
            }
        }
    }
}

/// Envelope amplitudes on the imaging grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl EnvelopeImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(height, width, data.len())?;
        if let Some(bad) = data.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("envelope values must be finite and >= 0, found {bad}")));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample at a padded coordinate.
    #[inline]
    pub fn get_padded(&self, y: isize, x: isize, padding: Padding) -> f64 {
        self.get(padding.index(y, self.height), padding.index(x, self.width))
    }

    /// Mean of `r^2` over the whole image.
    pub fn mean_square(&self) -> f64 {
        self.data.iter().map(|r| r * r).sum::<f64>() / self.data.len() as f64
    }
}

/// Per-pixel estimates of the shape parameter with a validity mask.
///
/// Invalid pixels hold [`ParamMap::SENTINEL`] and are skipped by metrics and
/// filters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl ParamMap {
    pub const SENTINEL: f64 = 0.0;

    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        check_shape(height, width, values.len())?;
        if valid.len() != values.len() {
            return Err(Error::Config(format!(
                "mask length {} does not match {} values",
                valid.len(),
                values.len()
            )));
        }
        let mut map = Self { height, width, values, valid };
        map.scrub();
        Ok(map)
    }

    /// A fully valid map.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = vec![true; values.len()];
        Self::new(height, width, values, valid)
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_values(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self::from_values(height, width, values)
    }

    /// Builds a map from per-pixel optional estimates.
    pub fn from_options(height: usize, width: usize, cells: Vec<Option<f64>>) -> Result<Self> {
        let valid = cells.iter().map(Option::is_some).collect();
        let values = cells.into_iter().map(|c| c.unwrap_or(Self::SENTINEL)).collect();
        Self::new(height, width, values, valid)
    }

    // Non-finite values cannot be valid.
    fn scrub(&mut self) {
        for (v, ok) in self.values.iter_mut().zip(self.valid.iter_mut()) {
            if !v.is_finite() {
                *ok = false;
            }
            if !*ok {
                *v = Self::SENTINEL;
            }
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.values[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.len() as f64
    }

    /// Iterator over valid values.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v)
    }

    /// Clamps valid values into `[lo, hi]` and returns how many were moved.
    /// Clamped pixels stay valid.
    pub fn clamp_values(&mut self, lo: f64, hi: f64) -> usize {
        let mut moved = 0;
        for (v, ok) in self.values.iter_mut().zip(&self.valid) {
            if *ok && (*v < lo || *v > hi) {
                *v = v.clamp(lo, hi);
                moved += 1;
            }
        }
        moved
    }

    /// Mean and population standard deviation over valid pixels.
    pub fn valid_mean_std(&self) -> Option<(f64, f64)> {
        let n = self.valid_count();
        if n == 0 {
            return None;
        }
        let mean = self.valid_values().sum::<f64>() / n as f64;
        let var = self.valid_values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        Some((mean, var.sqrt()))
    }

}

fn check_shape(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Config(format!("grid dimensions must be positive, got {height}x{width}")));
    }
    if height.checked_mul(width) != Some(len) {
        return Err(Error::Config(format!("{height}x{width} grid needs {} values, got {len}", height * width)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_repeats_edge() {
        let n = 4;
        let got: Vec<usize> = (-4..8).map(|i| Padding::Reflect.index(i, n)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0]);
        let rep: Vec<usize> = (-2..6).map(|i| Padding::Replicate.index(i, n)).collect();
        assert_eq!(rep, vec![0, 0, 0, 1, 2, 3, 3, 3]);
        assert_eq!(Padding::Reflect.index(-1, 1), 0);
    }

    #[test]
    fn shape_checks() {
        assert!(EnvelopeImage::new(2, 2, vec![0.0; 3]).is_err());
        assert!(EnvelopeImage::new(0, 2, vec![]).is_err());
        assert!(EnvelopeImage::new(1, 2, vec![1.0, -1.0]).is_err());
        assert!(ParamMap::new(1, 2, vec![1.0, 2.0], vec![true]).is_err());
    }

    #[test]
    fn non_finite_values_become_invalid() {
        let map = ParamMap::from_values(1, 3, vec![1.0, f64::NAN, f64::INFINITY]).unwrap();
        assert_eq!(map.valid(), &[true, false, false]);
        assert_eq!(map.values()[1], ParamMap::SENTINEL);
    }

    #[test]
    fn clamping_keeps_pixels_valid() {
        let mut map = ParamMap::from_values(1, 3, vec![0.001, 1.0, 50.0]).unwrap();
        assert_eq!(map.clamp_values(0.01, 10.0), 2);
        assert_eq!(map.values(), &[0.01, 1.0, 10.0]);
        assert_eq!(map.valid_count(), 3);
    }
}
