use nakagami::distribution::sample;
use nakagami::special::log_gamma;
use nakagami::unicorn::raw_unicorn_map;
use nakagami::{
    analytic_score, lowpass, ml_estimate_window, moment_estimate_window, rng, EnvelopeImage, EnvelopeSample, LowPass,
    NakagamiParams, OmegaMode, ParamMap, UnicornConfig,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn draw(m: f64, omega: f64, n: usize, g: &mut nakagami::rng::Rng) -> Vec<f64> {
    let p = NakagamiParams::new(m, omega).unwrap();
    sample(&p, n, g).unwrap().into_iter().map(|x| x.value()).collect()
}

/// Log-likelihood profiled over omega (its maximiser is mean(r^2)).
fn profile_log_likelihood(m: f64, n: f64, sum_ln_r: f64, omega: f64) -> f64 {
    let sum_r2 = n * omega;
    n * (std::f64::consts::LN_2 - log_gamma(m).unwrap() + m * (m / omega).ln()) + (2.0 * m - 1.0) * sum_ln_r
        - m / omega * sum_r2
}

fn grid_search_ml(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let omega = samples.iter().map(|r| r * r).sum::<f64>() / n;
    let sum_ln_r = samples.iter().map(|r| r.ln()).sum::<f64>();
    let ll = |m: f64| profile_log_likelihood(m, n, sum_ln_r, omega);
    let mut best = 0.05;
    let mut step = 0.01;
    let (mut lo, mut hi) = (0.05, 30.0);
    for _ in 0..5 {
        let mut x = lo;
        let mut best_ll = f64::NEG_INFINITY;
        while x <= hi {
            let v = ll(x);
            if v > best_ll {
                best_ll = v;
                best = x;
            }
            x += step;
        }
        lo = (best - step).max(0.01);
        hi = best + step;
        step /= 20.0;
    }
    best
}

#[test]
fn ml_matches_grid_search_on_random_windows() {
    let mut g = rng::seeded(2024);
    for i in 0..100 {
        let m = g.gen_range(0.3..3.0);
        let omega = g.gen_range(0.5..2.0);
        let window = draw(m, omega, 1000, &mut rng::stream(2024, i));
        let ml = ml_estimate_window(&window).unwrap();
        let oracle = grid_search_ml(&window);
        assert!((ml - oracle).abs() < 1e-3, "window {i}: ml {ml} grid {oracle}");
    }
}

#[test]
fn moment_error_decreases_with_window_size() {
    let seeds = 50;
    for &m in &[0.6, 1.0, 1.6] {
        let mut previous = f64::INFINITY;
        for &n in &[1_000usize, 10_000, 100_000, 1_000_000] {
            let mut errors: Vec<f64> = (0..seeds)
                .map(|s| {
                    let w = draw(m, 1.0, n, &mut rng::stream(n as u64, s));
                    (moment_estimate_window(&w).unwrap() - m).abs()
                })
                .collect();
            errors.sort_by(f64::total_cmp);
            let median = 0.5 * (errors[seeds as usize / 2 - 1] + errors[seeds as usize / 2]);
            assert!(median < previous, "m={m} N={n}: {median} !< {previous}");
            previous = median;
        }
    }
}

fn iid_image(m: f64, omega: f64, h: usize, w: usize, seed: u64) -> EnvelopeImage {
    EnvelopeImage::new(h, w, draw(m, omega, h * w, &mut rng::seeded(seed))).unwrap()
}

#[test]
fn unicorn_error_grows_linearly_with_score_noise() {
    let omega = 1.0;
    let m = 1.0;
    let img = iid_image(m, omega, 64, 64, 8);
    let p = NakagamiParams::new(m, omega).unwrap();
    let exact: Vec<f64> =
        img.data().iter().map(|&r| analytic_score(EnvelopeSample::new(r).unwrap(), &p).unwrap()).collect();
    let noise: Vec<f64> = {
        let mut g = rng::seeded(9);
        (0..exact.len()).map(|_| g.sample::<f64, _>(StandardNormal)).collect()
    };
    let cfg = UnicornConfig { omega_mode: OmegaMode::Fixed(omega), filter: LowPass::None, ..Default::default() };
    let median_error = |eps: f64| {
        let scores: Vec<f64> = exact.iter().zip(&noise).map(|(s, n)| s + eps * n).collect();
        let map = raw_unicorn_map(&img, &scores, &cfg).unwrap();
        let mut e: Vec<f64> = map.valid_values().map(|v| (v - m).abs()).collect();
        e.sort_by(f64::total_cmp);
        e[e.len() / 2]
    };
    assert!(median_error(0.0) < 1e-12);
    let slope = median_error(0.01) / 0.01;
    for i in 1..=10 {
        let eps = 0.01 * i as f64;
        let err = median_error(eps);
        assert!(err <= slope * eps * 1.05, "eps {eps}: {err} > {}", slope * eps);
        assert!(err >= slope * eps * 0.8, "eps {eps}: {err} far below linear");
    }
}

#[test]
fn constant_unit_field_with_exact_score_filters_to_one() {
    let img = iid_image(1.0, 1.0, 64, 64, 31);
    let p = NakagamiParams::new(1.0, 1.0).unwrap();
    let scores: Vec<f64> =
        img.data().iter().map(|&r| analytic_score(EnvelopeSample::new(r).unwrap(), &p).unwrap()).collect();
    let cfg = UnicornConfig { omega_mode: OmegaMode::Fixed(1.0), ..Default::default() };
    let map = nakagami::unicorn_map(&img, &scores, &cfg).unwrap();
    let (mean, _) = map.valid_mean_std().unwrap();
    assert!((mean - 1.0).abs() < 1e-9);
}

fn map_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<bool>)> {
    (3usize..12, 3usize..12).prop_flat_map(|(h, w)| {
        (
            Just(h),
            Just(w),
            prop::collection::vec(0.01f64..10.0, h * w),
            prop::collection::vec(prop::bool::weighted(0.85), h * w),
        )
    })
}

proptest! {
    #[test]
    fn median_output_values_come_from_input((h, w, values, valid) in map_strategy(), k in prop::sample::select(vec![1usize, 3])) {
        let map = ParamMap::new(h, w, values, valid).unwrap();
        let out = lowpass(&map, LowPass::Median(k)).unwrap();
        let inputs: Vec<f64> = map.valid_values().collect();
        for v in out.valid_values() {
            prop_assert!(inputs.contains(&v));
        }
        if k == 1 {
            prop_assert_eq!(out, map);
        }
    }

    #[test]
    fn median_output_lies_in_window_range((h, w, values, _v) in map_strategy()) {
        let map = ParamMap::from_values(h, w, values).unwrap();
        let out = lowpass(&map, LowPass::Median(3)).unwrap();
        for y in 0..h {
            for x in 0..w {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let yy = nakagami::Padding::Reflect.index(y as isize + dy, h);
                        let xx = nakagami::Padding::Reflect.index(x as isize + dx, w);
                        let v = map.get(yy, xx).unwrap();
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                let o = out.get(y, x).unwrap();
                prop_assert!(o >= lo && o <= hi);
            }
        }
    }

    #[test]
    fn average_filter_preserves_global_mean((h, w, values, _v) in map_strategy(), k in prop::sample::select(vec![1usize, 3])) {
        let map = ParamMap::from_values(h, w, values).unwrap();
        let out = lowpass(&map, LowPass::Average(k)).unwrap();
        let before = map.valid_mean_std().unwrap().0;
        let after = out.valid_mean_std().unwrap().0;
        prop_assert!((before - after).abs() < 1e-12);
    }

    #[test]
    fn moment_and_ml_are_scale_invariant(seed in any::<u64>(), m in 0.3f64..3.0, scale in 0.1f64..10.0) {
        let window = draw(m, 1.0, 200, &mut rng::seeded(seed));
        let scaled: Vec<f64> = window.iter().map(|r| r * scale).collect();
        let a = moment_estimate_window(&window).unwrap();
        let b = moment_estimate_window(&scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        let a = ml_estimate_window(&window).unwrap();
        let b = ml_estimate_window(&scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * a.max(1.0));
    }
}
