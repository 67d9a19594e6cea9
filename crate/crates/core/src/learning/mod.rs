//! MAP expectation-maximisation for sparse linear dynamical systems.
//!
//! A Laplace prior `p(A_ij) = beta/2 exp(-beta |A_ij|)` on the transition
//! matrix turns the `A` part of the M-step into an l1-penalised quadratic,
//! solved by proximal gradient descent. Everything else has a closed form.

mod em;
mod init;
mod mstep;
mod prox;
mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SldsError};

pub use em::{
    e_step, em_fit, em_fit_from, em_step, m_step, penalized_objective, EStep, EmStep,
    MONOTONICITY_TOL,
};
pub use init::init_params;
pub use mstep::{closed_form_updates, expected_log_joint, init_A_closed_form, ClosedFormUpdate};
pub use prox::{
    f_objective, grad_g, lipschitz_step, prox_gradient_A, soft_threshold, ProxOutcome,
    TransitionObjective,
};
pub use stats::{pool_stats, PooledStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Hidden state dimension `l`.
    pub states: usize,
    /// Laplace prior scale; 0 gives ordinary maximum-likelihood EM.
    pub beta: f64,
    pub em_max_iter: usize,
    /// Relative objective change `|dL| / (1 + |L|)` that stops EM.
    pub em_tol: f64,
    pub prox_max_iter: usize,
    /// Relative Frobenius change of `A` that stops the proximal loop.
    pub prox_tol: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(states: usize, beta: f64) -> Self {
        Self {
            states,
            beta,
            em_max_iter: 200,
            em_tol: 1e-6,
            prox_max_iter: 500,
            prox_tol: 1e-8,
            jitter: 1e-9,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states == 0 {
            return Err(SldsError::invalid("states must be positive"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(SldsError::invalid("beta must be a finite nonnegative number"));
        }
        for (name, v) in [("em_tol", self.em_tol), ("prox_tol", self.prox_tol), ("jitter", self.jitter)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SldsError::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityBreach {
    /// Zero-based EM iteration at which the objective dropped.
    pub iteration: usize,
    pub decrease: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Penalised log-posterior (up to a constant) at the start of each iteration.
    pub objective_trace: Vec<f64>,
    pub log_likelihood_trace: Vec<f64>,
    /// `f(A)` trace of the proximal loop in each M-step.
    pub prox_f_traces: Vec<Vec<f64>>,
    /// Number of M-steps applied.
    pub iterations_run: usize,
    pub converged: bool,
    /// Penalised objective of the returned parameters.
    pub final_objective: f64,
    /// Fraction of `|A_ij| < 1e-12` in the returned `A`.
    pub zero_fraction_a: f64,
    pub monotonicity_breaches: Vec<MonotonicityBreach>,
}
