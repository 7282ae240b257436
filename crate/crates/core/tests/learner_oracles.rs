use hybridfl_core::data::{generate_blobs, split_train_val, Dataset};
use hybridfl_core::learner::{
    adam_step, evaluate, glorot_bound, init_params, loss_and_grad, per_sample_grads, train_centralized, AdamState,
    ModelSpec, ParamVector, TrainHyper,
};
use hybridfl_core::stream::{derive_stream, StreamFactory};
use rand::{Rng, RngCore};

fn random_dataset(rng: &mut impl RngCore, n: usize, d: usize, k: usize) -> Dataset {
    let x = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..n).map(|_| (rng.next_u64() % k as u64) as usize).collect();
    Dataset::new(x, y, d, k).unwrap()
}

fn gradient_check(spec: &ModelSpec, seed: u64) {
    let mut rng = derive_stream(seed, "test/gradcheck").unwrap();
    let data = random_dataset(&mut rng, 6, spec.input_dim, spec.num_classes);
    let mut params = init_params(spec, &mut rng);
    // Perturb the biases away from zero so every path is exercised.
    params.values_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.3..0.3));
    let batch: Vec<usize> = (0..data.len()).collect();
    let (_, grad) = loss_and_grad(&params, spec, &data, &batch).unwrap();
    let h = 1e-6;
    let loss_at = |v: Vec<f64>| {
        let p = ParamVector::from_values(spec, v).unwrap();
        loss_and_grad(&p, spec, &data, &batch).unwrap().0
    };
    for i in 0..params.len() {
        let mut up = params.values().to_vec();
        let mut down = up.clone();
        up[i] += h;
        down[i] -= h;
        let numeric = (loss_at(up) - loss_at(down)) / (2.0 * h);
        let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-4);
        assert!(rel <= 1e-5, "param {i}: analytic {} numeric {numeric}", grad[i]);
    }
}

#[test]
fn logistic_gradients_match_finite_differences() {
    for seed in 0..20 {
        let spec = ModelSpec::logistic(2 + seed as usize % 5, 2 + seed as usize % 4).unwrap();
        gradient_check(&spec, seed);
    }
}

#[test]
fn mlp_gradients_match_finite_differences() {
    for seed in 0..20 {
        let spec = ModelSpec::mlp(2 + seed as usize % 4, 3 + seed as usize % 5, 2 + seed as usize % 3).unwrap();
        gradient_check(&spec, 100 + seed);
    }
}

#[test]
fn batch_gradient_is_mean_of_per_sample() {
    let spec = ModelSpec::mlp(4, 5, 3).unwrap();
    let mut rng = derive_stream(30, "test/mean").unwrap();
    let data = random_dataset(&mut rng, 20, 4, 3);
    let params = init_params(&spec, &mut rng);
    for _ in 0..10 {
        let batch: Vec<usize> = (0..7).map(|_| (rng.next_u64() % 20) as usize).collect();
        let (_, mean) = loss_and_grad(&params, &spec, &data, &batch).unwrap();
        let each = per_sample_grads(&params, &spec, &data, &batch).unwrap();
        for j in 0..params.len() {
            let oracle = each.iter().map(|g| g[j]).sum::<f64>() / batch.len() as f64;
            assert!((oracle - mean[j]).abs() < 1e-12);
        }
    }
}

#[test]
fn init_respects_glorot_bound() {
    let spec = ModelSpec::mlp(16, 32, 4).unwrap();
    let params = init_params(&spec, &mut derive_stream(31, "test/init").unwrap());
    for seg in params.layout() {
        let vals = &params.values()[seg.range()];
        if seg.is_bias {
            assert!(vals.iter().all(|&v| v == 0.0));
        } else {
            let bound = glorot_bound(seg.cols, seg.rows);
            assert!(vals.iter().all(|v| v.abs() <= bound), "{}", seg.name);
        }
    }
}

/// Reference Adam written out for the quadratic f(x, y) = (x - 3)^2 + 10 (y + 1)^2.
#[test]
fn adam_matches_reference_on_quadratic() {
    let grad = |p: &[f64]| vec![2.0 * (p[0] - 3.0), 20.0 * (p[1] + 1.0)];
    let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
    let mut reference = [0.0f64, 0.0];
    let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
    let mut params = vec![0.0, 0.0];
    let mut state = AdamState::new(2, lr);
    for t in 1..=100 {
        let g = grad(&reference);
        for i in 0..2 {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / (1.0 - b1.powi(t));
            let vh = v[i] / (1.0 - b2.powi(t));
            reference[i] -= lr * mh / (vh.sqrt() + eps);
        }
        let g = grad(&params);
        adam_step(&mut params, &g, &mut state);
        assert!((params[0] - reference[0]).abs() < 1e-9 && (params[1] - reference[1]).abs() < 1e-9);
    }
}

#[test]
fn separable_two_class_blobs_reach_perfect_accuracy() {
    let streams = StreamFactory::new(32);
    let data = generate_blobs(2, 4, 400, 10.0, &mut streams.stream("data/generate").unwrap()).unwrap();
    let split = split_train_val(data.labels(), 0.8, &mut streams.stream("data/split").unwrap()).unwrap();
    let (train, val) = (data.subset(&split.train), data.subset(&split.val));
    let spec = ModelSpec::logistic(4, 2).unwrap();
    let hyper = TrainHyper {
        epochs: 50,
        learning_rate: 0.05,
        batch_size: 32,
        patience: 50,
    };
    let (best, _) = train_centralized(&spec, &train, &val, &hyper, &streams, |_, _| {}).unwrap();
    assert_eq!(evaluate(&best, &spec, &val).accuracy, 1.0);
}

#[test]
fn wide_separation_logistic_reaches_99_percent() {
    let streams = StreamFactory::new(33);
    let data = generate_blobs(4, 8, 2000, 10.0, &mut streams.stream("data/generate").unwrap()).unwrap();
    let split = split_train_val(data.labels(), 0.8, &mut streams.stream("data/split").unwrap()).unwrap();
    let (train, val) = (data.subset(&split.train), data.subset(&split.val));
    let spec = ModelSpec::logistic(8, 4).unwrap();
    let hyper = TrainHyper {
        epochs: 10,
        learning_rate: 0.05,
        batch_size: 32,
        patience: 10,
    };
    let (best, _) = train_centralized(&spec, &train, &val, &hyper, &streams, |_, _| {}).unwrap();
    assert!(evaluate(&best, &spec, &val).accuracy >= 0.99);
}
