//! Sliding-window baselines: the moment estimator, the maximum-likelihood
//! estimator and window-modulated compounding (WMC).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{EnvelopeImage, Padding, ParamMap};
use crate::special::{digamma_pos, trigamma_pos};

/// Valid estimates are clamped into this range; clamped pixels stay valid.
pub const DEFAULT_CLAMP: (f64, f64) = (0.01, 10.0);

const ML_MAX_NEWTON_STEPS: usize = 20;
const ML_REL_TOL: f64 = 1e-10;
const ML_MIN_DELTA: f64 = 1e-12;
const ZERO_CLAMP_FACTOR: f64 = 1e-6;

/// Square window geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    size: usize,
    stride: usize,
    padding: Padding,
}

impl WindowSpec {
    pub fn new(size: usize, stride: usize, padding: Padding) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::Config(format!("window size must be odd and positive, got {size}")));
        }
        if stride == 0 || stride > size {
            return Err(Error::Config(format!("stride must be in 1..={size}, got {stride}")));
        }
        Ok(Self { size, stride, padding })
    }

    /// Stride 1, reflect padding.
    pub fn dense(size: usize) -> Result<Self> {
        Self::new(size, 1, Padding::Reflect)
    }

    /// Stride `size / 2` (at least 1), the cheaper layout used for ML maps.
    pub fn half_stride(size: usize) -> Result<Self> {
        Self::new(size, (size / 2).max(1), Padding::Reflect)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowEstimator {
    Moment,
    Ml,
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::DegenerateWindow(format!("need at least 2 samples, got {}", samples.len())));
    }
    if let Some(bad) = samples.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
        return Err(Error::Domain(format!("envelope samples must be finite and >= 0, found {bad}")));
    }
    Ok(())
}

/// Moment estimate `(E[r^2])^2 / E[(r^2 - E[r^2])^2]` with the biased (1/N)
/// central moment.
pub fn moment_estimate_window(samples: &[f64]) -> Result<f64> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mean = samples.iter().map(|r| r * r).sum::<f64>() / n;
    let var = samples
        .iter()
        .map(|r| {
            let d = r * r - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    // Rounding leaves a residue of order eps^2 * mean^2 on constant windows.
    if !(var > mean * mean * 1e-24) {
        return Err(Error::DegenerateWindow("second central moment of r^2 is zero".into()));
    }
    Ok(mean * mean / var)
}

/// Greenwood–Durand starting point for `ln m - psi(m) = delta`.
fn greenwood_durand(delta: f64) -> f64 {
    if delta <= 0.5772 {
        (0.500_087_6 + 0.164_885_2 * delta - 0.054_427_4 * delta * delta) / delta
    } else if delta <= 17.0 {
        (8.898_919 + 9.059_950 * delta + 0.977_537_3 * delta * delta)
            / (delta * (17.797_28 + 11.968_477 * delta + delta * delta))
    } else {
        1.0 / delta
    }
}

/// Maximum-likelihood shape estimate at `omega = mean(r^2)`: the gamma-shape
/// ML of `r^2`, refined by Newton steps on `ln m - psi(m) = delta`.
pub fn ml_estimate_window(samples: &[f64]) -> Result<f64> {
    check_samples(samples)?;
    let n = samples.len() as f64;
    let mean_sq = samples.iter().map(|r| r * r).sum::<f64>() / n;
    if !(mean_sq > 0.0) {
        return Err(Error::DegenerateWindow("all samples are zero".into()));
    }
    let r_min = ZERO_CLAMP_FACTOR * mean_sq.sqrt();
    let mean_log_sq = samples.iter().map(|r| (r.max(r_min) * r.max(r_min)).ln()).sum::<f64>() / n;
    let delta = mean_sq.ln() - mean_log_sq;
    if !(delta > ML_MIN_DELTA) {
        return Err(Error::DegenerateWindow(format!("log-moment gap {delta:e} is not positive")));
    }
    let mut m = greenwood_durand(delta);
    for _ in 0..ML_MAX_NEWTON_STEPS {
        let f = m.ln() - digamma_pos(m) - delta;
        let df = 1.0 / m - trigamma_pos(m);
        let mut next = m - f / df;
        if !(next > 0.0) {
            next = 0.5 * m;
        }
        let done = ((next - m) / m).abs() < ML_REL_TOL;
        m = next;
        if done {
            break;
        }
    }
    Ok(m)
}

fn estimate(samples: &[f64], estimator: WindowEstimator) -> Result<f64> {
    match estimator {
        WindowEstimator::Moment => moment_estimate_window(samples),
        WindowEstimator::Ml => ml_estimate_window(samples),
    }
}

/// Centres of the strided evaluation grid along one axis.
fn grid_centres(len: usize, stride: usize) -> Vec<usize> {
    let offset = (stride - 1) / 2;
    (offset..len).step_by(stride).collect()
}

fn window_estimate(
    image: &EnvelopeImage,
    cy: usize,
    cx: usize,
    window: &WindowSpec,
    estimator: WindowEstimator,
    buf: &mut Vec<f64>,
) -> Option<f64> {
    let half = (window.size / 2) as isize;
    buf.clear();
    for dy in -half..=half {
        for dx in -half..=half {
            buf.push(image.get_padded(cy as isize + dy, cx as isize + dx, window.padding));
        }
    }
    estimate(buf, estimator).ok().filter(|m| m.is_finite())
}

/// Parametric map from a square sliding window. Strided grids are expanded
/// back to full resolution by bilinear interpolation (edge-clamped);
/// degenerate windows are marked invalid.
pub fn sliding_window_map(
    image: &EnvelopeImage,
    window: &WindowSpec,
    estimator: WindowEstimator,
) -> Result<ParamMap> {
    let (h, w) = image.shape();
    if window.size > h.min(w) {
        return Err(Error::Config(format!(
            "window size {} exceeds image {}x{}",
            window.size, h, w
        )));
    }
    let ys = grid_centres(h, window.stride);
    let xs = grid_centres(w, window.stride);
    let grid: Vec<Option<f64>> = ys
        .par_iter()
        .flat_map_iter(|&cy| {
            let mut buf = Vec::with_capacity(window.size * window.size);
            xs.iter()
                .map(|&cx| window_estimate(image, cy, cx, window, estimator, &mut buf))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut map = if window.stride == 1 {
        ParamMap::from_options(h, w, grid)?
    } else {
        upsample_grid(&grid, ys.len(), xs.len(), window.stride, h, w)?
    };
    map.clamp_values(DEFAULT_CLAMP.0, DEFAULT_CLAMP.1);
    Ok(map)
}

// Position of pixel `p` within the grid: lower index and fractional weight.
fn grid_coord(p: usize, stride: usize, n: usize) -> (usize, usize, f64) {
    let offset = ((stride - 1) / 2) as f64;
    let t = ((p as f64 - offset) / stride as f64).clamp(0.0, (n - 1) as f64);
    let i0 = t.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, t - i0 as f64)
}

fn upsample_grid(
    grid: &[Option<f64>],
    ny: usize,
    nx: usize,
    stride: usize,
    h: usize,
    w: usize,
) -> Result<ParamMap> {
    let mut cells = Vec::with_capacity(h * w);
    for y in 0..h {
        let (y0, y1, fy) = grid_coord(y, stride, ny);
        for x in 0..w {
            let (x0, x1, fx) = grid_coord(x, stride, nx);
            let corners = [
                (y0, x0, (1.0 - fy) * (1.0 - fx)),
                (y0, x1, (1.0 - fy) * fx),
                (y1, x0, fy * (1.0 - fx)),
                (y1, x1, fy * fx),
            ];
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (gy, gx, wgt) in corners {
                if wgt == 0.0 {
                    continue;
                }
                if let Some(v) = grid[gy * nx + gx] {
                    acc += wgt * v;
                    weight += wgt;
                }
            }
            cells.push((weight > 0.0).then(|| acc / weight));
        }
    }
    ParamMap::from_options(h, w, cells)
}

/// Window-modulated compounding: the per-pixel mean of dense moment maps at
/// each window size. A pixel is valid only if every constituent map is.
pub fn wmc_map(image: &EnvelopeImage, sizes: &[usize]) -> Result<ParamMap> {
    if sizes.is_empty() {
        return Err(Error::Config("WMC needs at least one window size".into()));
    }
    let maps = sizes
        .iter()
        .map(|&s| sliding_window_map(image, &WindowSpec::dense(s)?, WindowEstimator::Moment))
        .collect::<Result<Vec<_>>>()?;
    let (h, w) = image.shape();
    let n = maps.len() as f64;
    let cells = (0..h * w)
        .map(|i| {
            let mut sum = 0.0;
            for map in &maps {
                if !map.valid()[i] {
                    return None;
                }
                sum += map.values()[i];
            }
            Some(sum / n)
        })
        .collect();
    ParamMap::from_options(h, w, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::{log_pdf_unchecked, sample_one, NakagamiParams};
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn draws(m: f64, n: usize, seed: u64) -> Vec<f64> {
        let p = NakagamiParams::new(m, 1.0).unwrap();
        let mut rng = seeded(seed);
        (0..n).map(|_| sample_one(&p, &mut rng)).collect()
    }

    fn iid_image(m: f64, size: usize, seed: u64) -> EnvelopeImage {
        EnvelopeImage::new(size, size, draws(m, size * size, seed)).unwrap()
    }

    #[test]
    fn window_spec_validation() {
        assert!(WindowSpec::dense(4).is_err());
        assert!(WindowSpec::new(5, 6, Padding::Reflect).is_err());
        assert!(WindowSpec::new(5, 0, Padding::Reflect).is_err());
        assert_eq!(WindowSpec::half_stride(11).unwrap().stride(), 5);
        assert_eq!(WindowSpec::half_stride(1).unwrap().stride(), 1);
    }

    #[test]
    fn moment_direct_arithmetic() {
        let m = moment_estimate_window(&[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_abs_diff_eq!(m, 6.25 / 2.25, epsilon = 1e-14);
    }

    #[test]
    fn constant_windows_are_degenerate() {
        let same = vec![0.731; 121];
        assert!(matches!(moment_estimate_window(&same), Err(Error::DegenerateWindow(_))));
        assert!(matches!(ml_estimate_window(&same), Err(Error::DegenerateWindow(_))));
        assert!(matches!(moment_estimate_window(&[1.0]), Err(Error::DegenerateWindow(_))));
        assert!(matches!(moment_estimate_window(&[1.0, -1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn moment_monte_carlo() {
        let m = moment_estimate_window(&draws(0.7, 1_000_000, 3)).unwrap();
        assert!((m - 0.7).abs() < 0.01, "{m}");
    }

    #[test]
    fn ml_monte_carlo() {
        let m = ml_estimate_window(&draws(1.2, 100_000, 4)).unwrap();
        assert!((m - 1.2).abs() < 0.02, "{m}");
    }

    // Profile log-likelihood over m at omega = mean(r^2), maximised on a grid.
    fn grid_search_ml(samples: &[f64], lo: f64, hi: f64, step: f64) -> f64 {
        let omega = samples.iter().map(|r| r * r).sum::<f64>() / samples.len() as f64;
        let mut best = (f64::NEG_INFINITY, lo);
        let steps = ((hi - lo) / step).round() as usize;
        for k in 0..=steps {
            let m = lo + k as f64 * step;
            let p = NakagamiParams::new(m, omega).unwrap();
            let ll: f64 = samples.iter().map(|&r| log_pdf_unchecked(r, &p)).sum();
            if ll > best.0 {
                best = (ll, m);
            }
        }
        best.1
    }

    #[test]
    fn ml_matches_grid_search() {
        let mut rng = seeded(8);
        for seed in 0..10 {
            let m_true = rng.gen_range(0.4..3.0);
            let samples = draws(m_true, 500, 100 + seed);
            let ml = ml_estimate_window(&samples).unwrap();
            let coarse = grid_search_ml(&samples, 0.05, 10.0, 1e-3);
            let fine = grid_search_ml(&samples, coarse - 1e-3, coarse + 1e-3, 1e-6);
            assert!((ml - fine).abs() < 1e-5, "ml {ml} grid {fine}");
        }
    }

    #[test]
    fn ml_handles_zero_samples() {
        let mut s = draws(0.8, 200, 9);
        s[0] = 0.0;
        assert!(ml_estimate_window(&s).unwrap().is_finite());
    }

    #[test]
    fn constant_m_moment_map_statistics() {
        let img = iid_image(1.0, 64, 21);
        let map = sliding_window_map(&img, &WindowSpec::dense(11).unwrap(), WindowEstimator::Moment).unwrap();
        assert_eq!(map.shape(), (64, 64));
        let (mean, std) = map.valid_mean_std().unwrap();
        assert!((mean - 1.0).abs() < 0.1, "mean {mean}");
        assert!(std < 0.45, "std {std}");
    }

    #[test]
    fn whole_image_window_replicates_single_estimate() {
        let img = iid_image(0.9, 15, 2);
        let win = WindowSpec::new(15, 15, Padding::Reflect).unwrap();
        let map = sliding_window_map(&img, &win, WindowEstimator::Moment).unwrap();
        let single = moment_estimate_window(img.data()).unwrap();
        for v in map.values() {
            assert_abs_diff_eq!(*v, single, epsilon = 1e-12);
        }
        assert_eq!(map.valid_count(), 15 * 15);
    }

    #[test]
    fn constant_image_is_all_invalid() {
        let img = EnvelopeImage::new(16, 16, vec![0.5; 256]).unwrap();
        for est in [WindowEstimator::Moment, WindowEstimator::Ml] {
            let map = sliding_window_map(&img, &WindowSpec::dense(5).unwrap(), est).unwrap();
            assert_eq!(map.valid_count(), 0);
        }
    }

    #[test]
    fn oversized_window_is_config_error() {
        let img = iid_image(1.0, 8, 1);
        let r = sliding_window_map(&img, &WindowSpec::dense(9).unwrap(), WindowEstimator::Moment);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn strided_map_interpolates_between_grid_points() {
        let img = iid_image(1.0, 32, 5);
        let win = WindowSpec::half_stride(9).unwrap();
        let strided = sliding_window_map(&img, &win, WindowEstimator::Ml).unwrap();
        let dense = sliding_window_map(&img, &WindowSpec::dense(9).unwrap(), WindowEstimator::Ml).unwrap();
        // Grid centres (offset 1, stride 4) carry the dense values exactly.
        for cy in (1..32).step_by(4) {
            for cx in (1..32).step_by(4) {
                assert_abs_diff_eq!(strided.get(cy, cx).unwrap(), dense.get(cy, cx).unwrap(), epsilon = 1e-12);
            }
        }
        // Midway between two centres is their mean.
        let mid = strided.get(1, 3).unwrap();
        let expect = 0.5 * (dense.get(1, 1).unwrap() + dense.get(1, 5).unwrap());
        assert_abs_diff_eq!(mid, expect, epsilon = 1e-12);
    }

    #[test]
    fn wmc_of_single_size_is_moment_map() {
        let img = iid_image(1.3, 24, 6);
        let wmc = wmc_map(&img, &[7]).unwrap();
        let mom = sliding_window_map(&img, &WindowSpec::dense(7).unwrap(), WindowEstimator::Moment).unwrap();
        assert_eq!(wmc, mom);
        assert!(wmc_map(&img, &[]).is_err());
    }

    #[test]
    fn wmc_of_identical_sizes_is_that_map() {
        let img = iid_image(0.8, 24, 7);
        let wmc = wmc_map(&img, &[9, 9, 9]).unwrap();
        let mom = sliding_window_map(&img, &WindowSpec::dense(9).unwrap(), WindowEstimator::Moment).unwrap();
        for (a, b) in wmc.values().iter().zip(mom.values()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn wmc_is_smoother_than_its_roughest_constituent() {
        let img = iid_image(1.0, 64, 12);
        let var = |m: &ParamMap| m.valid_mean_std().unwrap().1.powi(2);
        let wmc = var(&wmc_map(&img, &[9, 11, 13]).unwrap());
        let worst = [9, 11, 13]
            .iter()
            .map(|&s| var(&sliding_window_map(&img, &WindowSpec::dense(s).unwrap(), WindowEstimator::Moment).unwrap()))
            .fold(0.0, f64::max);
        assert!(wmc <= worst, "{wmc} > {worst}");
    }

    #[test]
    fn dense_map_is_shift_equivariant() {
        let big = iid_image(1.1, 40, 13);
        let shift = 3;
        let shifted = EnvelopeImage::from_fn(34, 34, |y, x| big.get(y + shift, x + shift)).unwrap();
        let original = EnvelopeImage::from_fn(34, 34, |y, x| big.get(y, x)).unwrap();
        let win = WindowSpec::dense(5).unwrap();
        let a = sliding_window_map(&original, &win, WindowEstimator::Moment).unwrap();
        let b = sliding_window_map(&shifted, &win, WindowEstimator::Moment).unwrap();
        for y in 2..29 {
            for x in 2..29 {
                assert_eq!(a.get(y + shift, x + shift), b.get(y, x));
            }
        }
    }
}
