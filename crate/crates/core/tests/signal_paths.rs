//! Sampled-path behaviour: stationary noise generation, the two-tone
//! negativity condition over random parameters, and ESA on noisy input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tko_core::esa_pipeline::{esa_demodulate, positivity_report};
use tko_core::mc_oracle::{autocovariance, sample_noise_path_stream};
use tko_core::{CovarianceKernel, OperatorKernel, SampledSignal, TwoToneSignal};

#[test]
fn noise_autocovariance_within_five_se() {
    let k = CovarianceKernel::new(0.5, 2.0).unwrap();
    let max_lag = (3.0 / k.c.sqrt()).ceil() as usize;
    let paths = 100;
    let est: Vec<Vec<f64>> = (0..paths)
        .map(|s| autocovariance(&sample_noise_path_stream(&k, 2048.0, 1.0, 5, s).unwrap().0.samples, max_lag + 40))
        .collect();
    for lag in (0..=max_lag).chain([max_lag + 40]) {
        let vals: Vec<f64> = est.iter().map(|e| e[lag]).collect();
        let mean = vals.iter().sum::<f64>() / paths as f64;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (paths as f64 - 1.0)).sqrt();
        let se = sd / (paths as f64).sqrt();
        assert!((mean - k.value(lag as f64)).abs() < 5.0 * se, "lag {lag}: {mean} vs {} (se {se})", k.value(lag as f64));
    }
}

#[test]
fn negativity_tests_agree_on_random_tuples() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut checked = 0;
    for _ in 0..10_000 {
        let a = rng.random_range(0.05..2.5);
        let f = rng.random_range(0.3..4.0);
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        let s = TwoToneSignal::new(a, f, th).unwrap();
        for e in s.find_extrema(0.0, 1.0).unwrap() {
            let c = s.negativity_check(e.t).unwrap();
            let direct = c.psi <= 1e-9;
            assert_eq!(c.quadratic_negative, c.between_bounds, "a={a} f={f} θ={th} t={}", e.t);
            if c.psi.abs() > 1e-9 {
                assert_eq!(c.quadratic_negative, direct, "a={a} f={f} θ={th} t={}", e.t);
            }
            checked += 1;
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn esa_on_noisy_tone_is_unbiased_in_median() {
    let w = 0.2;
    let k = CovarianceKernel::new(0.05, 0.5 * 10f64.powf(-2.5)).unwrap();
    let (noise, _) = sample_noise_path_stream(&k, 4000.0, 1.0, 7, 0).unwrap();
    let x: Vec<f64> = noise.samples.iter().enumerate().map(|(n, e)| (w * n as f64).cos() + e).collect();
    let e = esa_demodulate(&SampledSignal::new(x, 1.0).unwrap(), &OperatorKernel::new(0, 1).unwrap(), 0.0).unwrap();
    let mut om = e.valid_omega_sq();
    om.sort_by(f64::total_cmp);
    let med = om[om.len() / 2];
    assert!((med / (w * w) - 1.0).abs() < 0.05, "{med}");
}

#[test]
fn filtering_improves_positivity_at_eleven_db() {
    let w = 0.2;
    let k = CovarianceKernel::new(0.05, 0.5 * 10f64.powf(-1.1)).unwrap();
    let (noise, _) = sample_noise_path_stream(&k, 20_000.0, 1.0, 8, 0).unwrap();
    let x: Vec<f64> = noise.samples.iter().enumerate().map(|(n, e)| (w * n as f64).cos() + e).collect();
    let psi = tko_core::apply_tko(&SampledSignal::new(x, 1.0).unwrap(), &OperatorKernel::new(0, 1).unwrap()).unwrap();
    let filtered = tko_core::binomial_filter(&psi.samples).unwrap();
    let (before, after) = positivity_report(&psi.samples, &filtered);
    assert!(before > 0.0 && after < before, "{before} -> {after}");
}
