#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use slds_core::inference::{smooth_sequence, DEFAULT_JITTER};
use slds_core::learning::{pool_stats, PooledStats};
use slds_core::model::simulate;
use slds_core::linalg::spectral_radius;
use slds_core::{ModelParams, ObservationSequence};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `B B' + floor I` with Gaussian `B`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = gaussian_matrix(rng, n, n);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

/// Random model whose transition matrix has spectral radius in `[0.3, 0.95]`.
pub fn random_stable_params(rng: &mut ChaCha8Rng, l: usize, d: usize) -> ModelParams {
    let mut a = gaussian_matrix(rng, l, l);
    let rho = spectral_radius(&a);
    let target = rng.random_range(0.3..0.95);
    if rho > 1e-12 {
        a *= target / rho;
    }
    ModelParams {
        a,
        c: gaussian_matrix(rng, d, l),
        q: random_spd(rng, l, 0.1),
        r: random_spd(rng, d, 0.1),
        pi1: gaussian_vector(rng, l),
        v1: random_spd(rng, l, 0.1),
    }
}

pub fn random_sequence(rng: &mut ChaCha8Rng, len: usize, d: usize) -> ObservationSequence {
    ObservationSequence::new(gaussian_matrix(rng, len, d))
}

/// Pooled statistics from smoothing simulated data under a random model, so
/// every second-moment sum is a genuine Gram matrix.
pub fn random_stats(rng: &mut ChaCha8Rng, l: usize, d: usize) -> PooledStats {
    let params = random_stable_params(rng, l, d);
    let n_seq = rng.random_range(1..5);
    let seqs: Vec<ObservationSequence> = (0..n_seq)
        .map(|_| {
            let len = rng.random_range(4..10);
            simulate(&params, len, rng.random()).unwrap().1
        })
        .collect();
    let smoothed: Vec<_> = seqs
        .iter()
        .map(|y| smooth_sequence(&params, y, DEFAULT_JITTER).unwrap().0)
        .collect();
    pool_stats(&smoothed, &seqs).unwrap()
}

/// Uniformly random orthogonal matrix via QR of a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| r[(i, i)].signum()));
    q * signs
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
