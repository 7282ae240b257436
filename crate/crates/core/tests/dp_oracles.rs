use hybridfl_core::data::Dataset;
use hybridfl_core::dp::{
    add_gaussian_noise, apply_cdp_sf, calibrate_sigma_paper, clip_per_sample, clip_to_norm, default_orders,
    ldp_pe_local_step, RdpAccountant,
};
use hybridfl_core::learner::{init_params, plain_step, AdamState, ModelSpec};
use hybridfl_core::stream::derive_stream;
use hybridfl_core::vecops::l2_norm;
use rand::{Rng, RngCore};

#[test]
fn clipping_bounds_ten_thousand_gradients() {
    let mut rng = derive_stream(20, "test/clip").unwrap();
    let clip = 1.0;
    let grads: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            let dim = 1 + (rng.next_u64() % 50) as usize;
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
        })
        .collect();
    let clipped = clip_per_sample(&grads, clip);
    let mut max_norm: f64 = 0.0;
    for (g, c) in grads.iter().zip(&clipped) {
        let (n, m) = (l2_norm(g), l2_norm(c));
        max_norm = max_norm.max(m);
        assert!(m <= n + 1e-12);
        if n <= clip {
            assert!(g.iter().zip(c).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
    assert!(max_norm <= clip + 1e-9);
    assert_eq!(clip_to_norm(&[0.0, 2.0], 1.0), vec![0.0, 1.0]);
}

#[test]
fn paper_calibration() {
    assert_eq!(calibrate_sigma_paper(1.0, 1.0, 1.0).unwrap(), 1.0);
    assert_eq!(calibrate_sigma_paper(1.0, 1.0, 0.5).unwrap(), 2.0);
    assert_eq!(calibrate_sigma_paper(2.0, 1.0, 1.0).unwrap(), 2.0);
    assert!(calibrate_sigma_paper(1.0, 1.0, 0.0).is_err());
}

#[test]
fn accountant_matches_analytic_minimum() {
    // min over the same orders of alpha/2 + ln(1e5)/(alpha - 1)
    let oracle = default_orders()
        .iter()
        .map(|&a| a / 2.0 + (1e5f64).ln() / (a - 1.0))
        .fold(f64::INFINITY, f64::min);
    let mut acct = RdpAccountant::new(1.0, 1.0).unwrap();
    acct.step();
    let eps = acct.epsilon(1e-5).unwrap();
    assert!((eps - oracle).abs() < 1e-2, "{eps} vs {oracle}");
    assert!((eps - 5.298).abs() < 1e-2);
    assert_eq!(RdpAccountant::new(1.0, 1.0).unwrap().epsilon(1e-5).unwrap(), 0.0);
}

#[test]
fn accountant_monotonicity_grid() {
    let eps = |q: f64, sigma: f64, steps: u64| {
        let mut a = RdpAccountant::new(q, sigma).unwrap();
        (0..steps).for_each(|_| a.step());
        a.epsilon(1e-5).unwrap()
    };
    let mut violations = 0;
    for q in [1.0, 0.1, 0.01] {
        for sigma in [0.5, 1.0, 2.0] {
            let row: Vec<f64> = [1, 10, 100].iter().map(|&s| eps(q, sigma, s)).collect();
            violations += row.windows(2).filter(|w| w[1] < w[0]).count();
        }
        for steps in [1, 10, 100] {
            let col: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&s| eps(q, s, steps)).collect();
            violations += col.windows(2).filter(|w| w[1] > w[0]).count();
        }
    }
    assert_eq!(violations, 0);
    assert_eq!(eps(1.0, 0.0, 1), f64::INFINITY);
}

#[test]
fn gaussian_noise_has_requested_std() {
    let mut rng = derive_stream(21, "test/noise").unwrap();
    let sigma = 3.0;
    let draws = add_gaussian_noise(&vec![0.0; 100_000], sigma, &mut rng);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((var.sqrt() / sigma - 1.0).abs() < 0.02);
    let again = add_gaussian_noise(&vec![0.0; 100_000], sigma, &mut derive_stream(21, "test/noise").unwrap());
    assert_eq!(draws, again);
}

#[test]
fn cdp_mean_is_unbiased() {
    let mut rng = derive_stream(22, "test/cdp").unwrap();
    let updates = vec![vec![0.3, -2.0, 0.1], vec![1.5, 0.0, -0.2], vec![-0.4, 0.4, 0.4]];
    let (clip, sigma) = (1.0, 1.0);
    let clipped = clip_per_sample(&updates, clip);
    let target: Vec<f64> = (0..3).map(|j| clipped.iter().map(|c| c[j]).sum::<f64>() / 3.0).collect();
    let draws = 10_000;
    let mut acc = [0.0; 3];
    for _ in 0..draws {
        let out = apply_cdp_sf(&updates, clip, sigma, &mut rng).unwrap();
        (0..3).for_each(|j| acc[j] += out[j]);
    }
    let se = sigma * clip / 3.0 / (draws as f64).sqrt();
    for j in 0..3 {
        assert!((acc[j] / draws as f64 - target[j]).abs() < 3.0 * se);
    }
}

#[test]
fn noiseless_dp_sgd_equals_plain_step() {
    let spec = ModelSpec::logistic(3, 2).unwrap();
    let mut rng = derive_stream(23, "test/ldp").unwrap();
    // Tiny features keep every per-sample gradient inside the ball.
    let x: Vec<f64> = (0..24).map(|_| rng.random_range(-0.1..0.1)).collect();
    let data = Dataset::new(x, (0..8).map(|i| i % 2).collect(), 3, 2).unwrap();
    let start = init_params(&spec, &mut rng);
    let batch: Vec<usize> = (0..8).collect();
    let (mut a, mut b) = (start.clone(), start);
    let (mut adam_a, mut adam_b) = (AdamState::new(a.len(), 0.05), AdamState::new(b.len(), 0.05));
    let mut acct = RdpAccountant::new(1.0, 0.0).unwrap();
    for _ in 0..5 {
        ldp_pe_local_step(&mut a, &spec, &data, &batch, 100.0, 0.0, &mut rng, &mut adam_a, &mut acct).unwrap();
        plain_step(&mut b, &spec, &data, &batch, &mut adam_b).unwrap();
    }
    assert_eq!(a.values(), b.values());
    assert_eq!(acct.steps(), 5);
    let too_big: Vec<usize> = (0..9).map(|i| i % 8).collect();
    assert!(ldp_pe_local_step(&mut a, &spec, &data, &too_big, 1.0, 1.0, &mut rng, &mut adam_a, &mut acct).is_err());
}
