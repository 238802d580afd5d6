//! Amortized residual denoising-autoencoder (AR-DAE) objective
//! `E || u + sigma * s_theta(R + sigma u) ||^2` and its parameter gradient.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::network::{Precision, ScoreNetwork};
use super::real::Real;
use crate::error::{Error, Result};
use crate::image::EnvelopeImage;

/// Perturbation for one image: scale `sigma` and per-pixel `u ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub sigma: f64,
    pub u: Vec<f64>,
}

/// How a batch loss is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LossOptions {
    pub precision: Precision,
    /// Also evaluate each draw at `-u` and average the pair. The expectation
    /// is unchanged because `u` and `-u` are equally likely; the variance of
    /// the gradient drops from order `sigma^2` to order `sigma^4`.
    pub antithetic: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    /// Mean squared residual per element.
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Draws `sigma = |z|`, `z ~ N(0, delta^2)`, then `u`, for each image in order.
pub fn draw_noise<R: Rng + ?Sized>(batch: &[EnvelopeImage], delta: f64, rng: &mut R) -> Vec<NoiseDraw> {
    batch
        .iter()
        .map(|img| {
            let z: f64 = rng.sample(StandardNormal);
            let sigma = (delta * z).abs();
            let u = (0..img.data().len()).map(|_| rng.sample(StandardNormal)).collect();
            NoiseDraw { sigma, u }
        })
        .collect()
}

/// AR-DAE loss and gradient for a batch with freshly drawn noise.
pub fn ardae_loss<R: Rng + ?Sized>(
    net: &ScoreNetwork,
    batch: &[EnvelopeImage],
    delta: f64,
    rng: &mut R,
) -> Result<LossGrad> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    let noise = draw_noise(batch, delta, rng);
    ardae_loss_with_noise(net, batch, &noise, LossOptions::default())
}

/// AR-DAE loss and gradient for explicit noise draws.
pub fn ardae_loss_with_noise(
    net: &ScoreNetwork,
    batch: &[EnvelopeImage],
    noise: &[NoiseDraw],
    options: LossOptions,
) -> Result<LossGrad> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if noise.len() != batch.len() || batch.iter().zip(noise).any(|(b, n)| b.data().len() != n.u.len()) {
        return Err(Error::Config("noise draws do not match the batch".into()));
    }
    match options.precision {
        Precision::F64 => batch_loss::<f64>(net, net.params(), batch, noise, options.antithetic),
        Precision::F32 => {
            let params: Vec<f32> = net.params().iter().map(|&v| v as f32).collect();
            batch_loss::<f32>(net, &params, batch, noise, options.antithetic)
        }
    }
}

fn batch_loss<T: Real>(
    net: &ScoreNetwork,
    params: &[T],
    batch: &[EnvelopeImage],
    noise: &[NoiseDraw],
    antithetic: bool,
) -> Result<LossGrad> {
    let signs: &[f64] = if antithetic { &[1.0, -1.0] } else { &[1.0] };
    let elements: usize = batch.iter().map(|b| b.data().len()).sum::<usize>() * signs.len();
    let scale = 1.0 / elements as f64;

    // Per-image work is independent; the reduction below runs in batch order
    // so the result does not depend on the thread count.
    let parts: Vec<(f64, Vec<T>)> = batch
        .par_iter()
        .zip(noise.par_iter())
        .map(|(img, draw)| {
            let mut grad = vec![T::zero(); params.len()];
            let mut sum = 0.0;
            for &sign in signs {
                let x: Vec<f64> = img.data().iter().zip(&draw.u).map(|(r, u)| r + sign * draw.sigma * u).collect();
                net.forward_backward(params, img.height(), img.width(), &x, &mut grad, |s| {
                    s.iter()
                        .zip(&draw.u)
                        .map(|(s, u)| {
                            let resid = sign * u + draw.sigma * s;
                            sum += resid * resid;
                            2.0 * draw.sigma * resid * scale
                        })
                        .collect()
                });
            }
            (sum, grad)
        })
        .collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (sum, g) in parts {
        total += sum;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v.as_f64();
        }
    }
    let loss = total * scale;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence { step: 0, loss });
    }
    Ok(LossGrad { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Activation;
    use crate::nn::network::Topology;
    use crate::rng::seeded;

    fn images(n: usize, h: usize, w: usize, seed: u64) -> Vec<EnvelopeImage> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| EnvelopeImage::from_fn(h, w, |_, _| rng.gen_range(0.05..2.0)).unwrap())
            .collect()
    }

    #[test]
    fn zero_sigma_loss_is_mean_u_squared() {
        let mut rng = seeded(1);
        let mut net = ScoreNetwork::new(Topology::default(), &mut rng).unwrap();
        for p in net.params_mut() {
            *p += rng.gen_range(-0.1..0.1);
        }
        let batch = images(2, 8, 8, 2);
        let mut noise = draw_noise(&batch, 0.1, &mut rng);
        for n in &mut noise {
            n.sigma = 0.0;
        }
        let expect: f64 = noise.iter().flat_map(|n| n.u.iter()).map(|u| u * u).sum::<f64>() / 128.0;
        let got = ardae_loss_with_noise(&net, &batch, &noise, LossOptions::default()).unwrap();
        assert!((got.loss - expect).abs() < 1e-12);
        assert!(got.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let net = ScoreNetwork::new(Topology::default(), &mut seeded(0)).unwrap();
        assert!(ardae_loss(&net, &[], 0.1, &mut seeded(0)).is_err());
        assert!(ardae_loss(&net, &images(1, 4, 4, 0), 0.0, &mut seeded(0)).is_err());
        let batch = images(2, 4, 4, 0);
        let noise = draw_noise(&batch[..1], 0.1, &mut seeded(0));
        assert!(ardae_loss_with_noise(&net, &batch, &noise, LossOptions::default()).is_err());
    }

    #[test]
    fn antithetic_loss_has_the_same_expectation_at_zero_network() {
        let net = ScoreNetwork::new(
            Topology { channels: vec![2], kernel: 3, convs_per_level: 1, activation: Activation::Silu },
            &mut seeded(0),
        )
        .unwrap();
        let batch = images(4, 6, 6, 3);
        let noise = draw_noise(&batch, 0.1, &mut seeded(4));
        let plain = ardae_loss_with_noise(&net, &batch, &noise, LossOptions::default()).unwrap();
        let anti = ardae_loss_with_noise(&net, &batch, &noise, LossOptions { antithetic: true, ..Default::default() })
            .unwrap();
        assert!((plain.loss - anti.loss).abs() < 1e-12);
    }
}
