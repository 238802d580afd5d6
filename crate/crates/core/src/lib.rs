//! Nakagami parametric imaging for quantitative ultrasound.
//!
//! The crate estimates per-pixel Nakagami shape parameters `m` from envelope
//! images. Besides the classical sliding-window moment and
//! maximum-likelihood estimators and window-modulated compounding, it
//! provides a closed-form estimator that inverts the score
//! `d/dr log p(r)` of the envelope; the score is learned by a small
//! convolutional network trained with a denoising score-matching objective.
//!
//! Modules:
//! - [`distribution`], [`special`]: the Nakagami law and gamma functions.
//! - [`classical`]: moment / ML / WMC maps.
//! - [`nn`]: the score network, AR-DAE loss, AdamW and training.
//! - [`unicorn`], [`filter`]: score inversion and low-pass adaptation.
//! - [`data`]: synthetic truths and measurements, PGM and NKRF files.
//! - [`metrics`]: PSNR, RMSE, ROI statistics and CSV tables.

pub mod classical;
pub mod data;
pub mod distribution;
pub mod error;
pub mod filter;
pub mod image;
mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod special;
pub mod unicorn;

pub use classical::{ml_estimate_window, moment_estimate_window, sliding_window_map, wmc_map, WindowEstimator, WindowSpec};
pub use distribution::{analytic_score, log_pdf, pdf, regime_of, sample, EnvelopeSample, NakagamiParams, Regime};
pub use error::{Error, Result};
pub use filter::{lowpass, LowPass};
pub use image::{EnvelopeImage, Padding, ParamMap};
pub use special::log_gamma;
pub use unicorn::{estimate_omega, pointwise_m, unicorn_map, OmegaMode, UnicornConfig};
