use std::time::Instant;

use hybridfl_core::field::FixedPointCodec;
use hybridfl_core::secagg::{RoundState, SecAggSession};
use hybridfl_core::stream::derive_stream;
use hybridfl_core::SecAggError;
use rand::{Rng, RngCore};

fn random_inputs(rng: &mut impl RngCore, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-9.0..9.0)).collect())
        .collect()
}

/// Survivor-set sum of the clamped inputs, computed in plain floats.
fn plaintext_sum(codec: &FixedPointCodec, inputs: &[Vec<f64>], dropped: &[usize]) -> Vec<f64> {
    let dim = inputs[0].len();
    let mut sum = vec![0.0; dim];
    for (i, v) in inputs.iter().enumerate() {
        if dropped.contains(&(i + 1)) {
            continue;
        }
        for j in 0..dim {
            sum[j] += codec.clamp(v[j]);
        }
    }
    sum
}

#[test]
fn hundred_trials_match_plaintext_sum() {
    let started = Instant::now();
    let codec = FixedPointCodec::default();
    let patterns: [&[usize]; 4] = [&[], &[1], &[2], &[3]];
    let mut rng = derive_stream(9, "test/secagg/trials").unwrap();
    for trial in 0..100 {
        let dim = if trial % 10 == 0 { 10_000 } else { 1 + (rng.next_u64() % 2000) as usize };
        let dropped = patterns[trial % patterns.len()];
        let inputs = random_inputs(&mut rng, 3, dim);
        let mut session = SecAggSession::setup(3, 2, dim, codec, &mut rng).unwrap();
        let out = session.simulate_round(&inputs, dropped).unwrap();
        assert_eq!(session.state(), RoundState::Done);
        let expected = plaintext_sum(&codec, &inputs, dropped);
        let bound = session.tolerance(3 - dropped.len());
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() <= bound + 1e-9, "trial {trial}: {a} vs {b}");
        }
    }
    assert!(started.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn below_threshold_aborts_without_output() {
    let codec = FixedPointCodec::default();
    let mut rng = derive_stream(10, "test/secagg/abort").unwrap();
    for dropped in [[1, 2], [1, 3], [2, 3]] {
        let inputs = random_inputs(&mut rng, 3, 16);
        let mut session = SecAggSession::setup(3, 2, 16, codec, &mut rng).unwrap();
        let err = session.simulate_round(&inputs, &dropped).unwrap_err();
        assert!(matches!(err, SecAggError::Aborted { .. }), "{err:?}");
        assert_eq!(session.state(), RoundState::Aborted);
    }
}

#[test]
fn masked_payload_hides_the_input() {
    let codec = FixedPointCodec::default();
    let mut rng = derive_stream(11, "test/secagg/mask").unwrap();
    let dim = 256;
    let mut equal = 0usize;
    for _ in 0..100 {
        let inputs = random_inputs(&mut rng, 3, dim);
        let session = SecAggSession::setup(3, 2, dim, codec, &mut rng).unwrap();
        for (i, v) in inputs.iter().enumerate() {
            let msg = session.client_mask_input(i + 1, v).unwrap();
            equal += msg
                .payload
                .iter()
                .zip(v)
                .filter(|(p, x)| **p == codec.quantize(**x))
                .count();
        }
    }
    // Expected matches are 300 * dim / p, effectively zero.
    assert!(equal <= 1, "{equal} coordinates left unmasked");
}

#[test]
fn duplicate_submission_is_rejected() {
    let codec = FixedPointCodec::default();
    let mut rng = derive_stream(12, "test/secagg/dup").unwrap();
    let session = SecAggSession::setup(3, 2, 4, codec, &mut rng).unwrap();
    session.client_mask_input(1, &[0.0; 4]).unwrap();
    assert!(session.client_mask_input(1, &[0.0; 4]).is_err());
    assert!(session.client_mask_input(2, &[0.0; 3]).is_err());
}
