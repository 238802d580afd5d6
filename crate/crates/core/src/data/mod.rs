//! Synthetic experiment data: ground-truth shape maps from grayscale
//! intensities, per-pixel Nakagami measurements, dataset splits and the
//! raster formats.

pub mod pgm;
pub mod phantom;
pub mod raster;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::distribution::{sample_one, NakagamiParams};
use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, ParamMap};
use crate::rng;

pub const M_LOW: f64 = 0.5;
pub const M_HIGH: f64 = 2.0;

/// Ground-truth shape map with every value in `[M_LOW, M_HIGH]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthMap(ParamMap);

impl GroundTruthMap {
    pub fn new(map: ParamMap) -> Result<Self> {
        if map.valid_count() != map.len() {
            return Err(Error::Domain("ground truth must be valid everywhere".into()));
        }
        if let Some(v) = map.values().iter().find(|v| !(M_LOW..=M_HIGH).contains(*v)) {
            return Err(Error::Domain(format!("ground-truth m = {v} outside [{M_LOW}, {M_HIGH}]")));
        }
        Ok(Self(map))
    }

    pub fn map(&self) -> &ParamMap {
        &self.0
    }

    pub fn into_map(self) -> ParamMap {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

/// `m = 0.5 + 1.5 * intensity`, elementwise.
pub fn normalize_to_m(height: usize, width: usize, intensities: &[f64]) -> Result<GroundTruthMap> {
    if let Some(v) = intensities.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("intensity {v} outside [0, 1]")));
    }
    let values = intensities.iter().map(|&i| intensity_to_m(i)).collect();
    GroundTruthMap::new(ParamMap::from_values(height, width, values)?)
}

#[inline]
pub fn intensity_to_m(intensity: f64) -> f64 {
    M_LOW + (M_HIGH - M_LOW) * intensity
}

#[inline]
pub fn m_to_intensity(m: f64) -> f64 {
    (m - M_LOW) / (M_HIGH - M_LOW)
}

/// Draws every pixel independently from Nakagami(truth pixel, omega).
pub fn synthesize_measurement<R: Rng + ?Sized>(truth: &GroundTruthMap, omega: f64, rng: &mut R) -> Result<EnvelopeImage> {
    let (h, w) = truth.shape();
    let data = truth
        .map()
        .values()
        .iter()
        .map(|&m| Ok(sample_one(&NakagamiParams::new(m, omega)?, rng)))
        .collect::<Result<Vec<_>>>()?;
    EnvelopeImage::new(h, w, data)
}

/// A ground-truth map with its synthetic measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub truth: GroundTruthMap,
    pub measurement: EnvelopeImage,
}

/// Measurements for a list of truths; image `i` uses stream `i` of `seed`.
pub fn synthesize_all(truths: Vec<GroundTruthMap>, omega: f64, seed: u64) -> Result<Vec<Sample>> {
    truths
        .into_iter()
        .enumerate()
        .map(|(i, truth)| {
            let measurement = synthesize_measurement(&truth, omega, &mut rng::stream(seed, i as u64))?;
            Ok(Sample { truth, measurement })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

pub type Dataset = Split<Sample>;

/// Seeded shuffle, then the first `ceil(fraction * n)` items train.
pub fn split_dataset<T>(mut items: Vec<T>, train_fraction: f64, seed: u64) -> Result<Split<T>> {
    if items.len() < 2 {
        return Err(Error::Config(format!("need at least 2 items to split, got {}", items.len())));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let n_train = (train_fraction * items.len() as f64).ceil() as usize;
    if n_train == 0 || n_train >= items.len() {
        return Err(Error::Config(format!(
            "fraction {train_fraction} of {} items leaves an empty split",
            items.len()
        )));
    }
    items.shuffle(&mut rng::seeded(seed));
    let test = items.split_off(n_train);
    Ok(Split { train: items, test, seed })
}
