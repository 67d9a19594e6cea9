mod common;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use slds_core::inference::*;
use slds_core::learning::pool_stats;
use slds_core::linalg::min_eigenvalue;
use slds_core::model::simulate;
use slds_core::{ModelParams, ObservationSequence};

fn small_instance(seed: u64) -> (ModelParams, ObservationSequence) {
    let mut rng = rng(seed);
    let l = rng.random_range(1..=3);
    let d = rng.random_range(1..=2);
    let len = rng.random_range(1..=6);
    let params = random_stable_params(&mut rng, l, d);
    let y = simulate(&params, len, seed).unwrap().1;
    (params, y)
}

#[test]
fn smoother_agrees_with_joint_gaussian_conditioning() {
    for seed in 0..300 {
        let (params, y) = small_instance(seed);
        let (fast, _) = smooth_sequence(&params, &y, DEFAULT_JITTER).unwrap();
        let slow = brute_force_smoother_oracle(&params, &y).unwrap();
        for t in 0..y.len() {
            assert!((&fast.zhat[t] - &slow.zhat[t]).amax() < 1e-8, "seed {seed} zhat t={t}");
            assert!(max_abs_diff(&fast.m[t], &slow.m[t]) < 1e-8, "seed {seed} M t={t}");
        }
        for t in 0..y.len() - 1 {
            assert!(max_abs_diff(&fast.mcross[t], &slow.mcross[t]) < 1e-8, "seed {seed} Mcross");
        }
    }
}

#[test]
fn log_likelihood_matches_joint_density() {
    for seed in 0..300 {
        let (params, y) = small_instance(seed + 10_000);
        let ll = log_likelihood(&params, &y).unwrap();
        let oracle = joint_gaussian_log_likelihood(&params, &y).unwrap();
        assert!((ll - oracle).abs() < 1e-8 * (1.0 + oracle.abs()), "seed {seed}: {ll} vs {oracle}");
    }
}

#[test]
fn log_likelihood_invariant_under_orthogonal_change_of_basis() {
    for seed in 0..100 {
        let mut rng = rng(seed + 20_000);
        let l = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let params = random_stable_params(&mut rng, l, d);
        let y = simulate(&params, 12, seed).unwrap().1;
        let u = random_orthogonal(&mut rng, l);
        let ut = u.transpose();
        let rotated = ModelParams {
            a: &u * &params.a * &ut,
            c: &params.c * &ut,
            q: &u * &params.q * &ut,
            r: params.r.clone(),
            pi1: &u * &params.pi1,
            v1: &u * &params.v1 * &ut,
        };
        let before = log_likelihood(&params, &y).unwrap();
        let after = log_likelihood(&rotated, &y).unwrap();
        assert!((before - after).abs() < 1e-9 * (1.0 + before.abs()), "{before} vs {after}");
    }
}

#[test]
fn smoothing_never_increases_uncertainty() {
    for seed in 0..200 {
        let mut rng = rng(seed + 30_000);
        let l = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let params = random_stable_params(&mut rng, l, d);
        let y = simulate(&params, rng.random_range(2..15), seed).unwrap().1;
        let filt = kalman_filter(&params, &y).unwrap();
        let sm = rts_smooth(&params, &filt).unwrap();
        for t in 0..y.len() {
            assert!(min_eigenvalue(&sm.covs[t]) >= -1e-8);
            let gap = &filt.filtered_covs[t] - &sm.covs[t];
            assert!(min_eigenvalue(&gap) >= -1e-8, "seed {seed} t={t}");
            let from_moments = &sm.m[t] - &sm.zhat[t] * sm.zhat[t].transpose();
            assert!(min_eigenvalue(&from_moments) >= -1e-8);
        }
    }
}

#[test]
fn batched_e_step_matches_per_sequence_pooling() {
    for seed in 0..30 {
        let mut rng = rng(seed + 40_000);
        let l = rng.random_range(1..=5);
        let d = rng.random_range(1..=3);
        let params = random_stable_params(&mut rng, l, d);
        // mixed lengths exercise the grouping by length
        let seqs: Vec<ObservationSequence> = (0..rng.random_range(1..12))
            .map(|i| simulate(&params, rng.random_range(2..9), seed * 100 + i).unwrap().1)
            .collect();
        let (batched, ll) = pooled_e_step(&params, &seqs, DEFAULT_JITTER).unwrap();
        let mut per_seq = Vec::new();
        let mut ll_ref = 0.0;
        for y in &seqs {
            let (st, v) = smooth_sequence(&params, y, DEFAULT_JITTER).unwrap();
            per_seq.push(st);
            ll_ref += v;
        }
        let reference = pool_stats(&per_seq, &seqs).unwrap();
        let scale = 1.0 + reference.s_all.amax();
        let pairs: [(&DMatrix<f64>, &DMatrix<f64>); 7] = [
            (&batched.s_lag, &reference.s_lag),
            (&batched.s_cross, &reference.s_cross),
            (&batched.s_all, &reference.s_all),
            (&batched.s_tail, &reference.s_tail),
            (&batched.s_yz, &reference.s_yz),
            (&batched.s_yy, &reference.s_yy),
            (&batched.m1_sum, &reference.m1_sum),
        ];
        for (x, y) in pairs {
            assert!(max_abs_diff(x, y) < 1e-10 * scale);
        }
        assert!((&batched.z1_sum - &reference.z1_sum).amax() < 1e-10 * scale);
        assert_eq!((batched.n_seq, batched.t_total), (reference.n_seq, reference.t_total));
        assert!((ll - ll_ref).abs() < 1e-9 * (1.0 + ll_ref.abs()));
    }
}

#[test]
fn multi_sequence_likelihood_is_a_sum() {
    let mut rng = rng(7);
    let params = random_stable_params(&mut rng, 2, 2);
    let a = simulate(&params, 8, 1).unwrap().1;
    let b = simulate(&params, 5, 2).unwrap().1;
    let total = total_log_likelihood(&params, &[a.clone(), b.clone()]).unwrap();
    let parts = log_likelihood(&params, &a).unwrap() + log_likelihood(&params, &b).unwrap();
    assert!((total - parts).abs() < 1e-10);
}

#[test]
fn smoothing_a_single_step_returns_the_filter() {
    let mut rng = rng(8);
    let params = random_stable_params(&mut rng, 3, 2);
    let y = simulate(&params, 1, 3).unwrap().1;
    let filt = kalman_filter(&params, &y).unwrap();
    let sm = rts_smooth(&params, &filt).unwrap();
    assert_eq!(sm.zhat[0], filt.filtered_means[0]);
    assert!(max_abs_diff(&sm.covs[0], &filt.filtered_covs[0]) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_and_smoother_covariances_stay_psd(seed in any::<u64>(), len in 1usize..20) {
        let mut rng = rng(seed);
        let l = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let params = random_stable_params(&mut rng, l, d);
        let y = random_sequence(&mut rng, len, d);
        let filt = kalman_filter(&params, &y).unwrap();
        prop_assert!(filt.log_likelihood.is_finite());
        let sm = rts_smooth(&params, &filt).unwrap();
        for t in 0..len {
            prop_assert!(min_eigenvalue(&filt.filtered_covs[t]) >= -1e-10);
            prop_assert!(min_eigenvalue(&filt.predicted_covs[t]) >= -1e-10);
            prop_assert!(min_eigenvalue(&sm.covs[t]) >= -1e-8);
        }
    }
}
