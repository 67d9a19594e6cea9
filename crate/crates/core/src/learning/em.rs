use nalgebra::DMatrix;

use super::{
    closed_form_updates, init_A_closed_form, init_params, prox::run_prox, FitConfig,
    FitDiagnostics, MonotonicityBreach, PooledStats, TransitionObjective,
};
use crate::error::{Result, SldsError};
use crate::inference::pooled_e_step;
use crate::linalg::{l1_norm, zero_fraction};
use crate::model::{ModelParams, ObservationSequence};

/// Objective decreases larger than this (absolute) are reported as anomalies.
pub const MONOTONICITY_TOL: f64 = 1e-8;

/// Result of one E-step.
#[derive(Clone, Debug)]
pub struct EStep {
    pub stats: PooledStats,
    pub log_likelihood: f64,
}

/// Result of one full EM iteration.
#[derive(Clone, Debug)]
pub struct EmStep {
    /// Parameters after the M-step.
    pub params: ModelParams,
    /// Log-likelihood of the input parameters.
    pub log_likelihood: f64,
    /// Penalised objective of the input parameters.
    pub objective: f64,
    pub prox_f_trace: Vec<f64>,
}

/// Smoothing of every sequence, pooled in sequence order.
pub fn e_step(params: &ModelParams, sequences: &[ObservationSequence], jitter: f64) -> Result<EStep> {
    let (stats, log_likelihood) = pooled_e_step(params, sequences, jitter)?;
    Ok(EStep { stats, log_likelihood })
}

/// Log-likelihood minus `beta * ||A||_1`; the prior normalisation constant is dropped.
pub fn penalized_objective(log_likelihood: f64, a: &DMatrix<f64>, beta: f64) -> f64 {
    if beta == 0.0 {
        log_likelihood
    } else {
        log_likelihood - beta * l1_norm(a)
    }
}

/// M-step from pooled statistics.
///
/// Order: closed-form `A`, then `C, R, Q, pi1, V1` with that `A` in the `Q`
/// update, then proximal iterations for the final `A` holding `Q` fixed.
pub fn m_step(stats: &PooledStats, cfg: &FitConfig) -> Result<(ModelParams, Vec<f64>)> {
    let a_init = init_A_closed_form(stats, cfg.jitter)?;
    let upd = closed_form_updates(stats, &a_init, cfg.jitter)?;
    let obj = TransitionObjective::new(&upd.q, stats, cfg.jitter)?;
    let prox = run_prox(&obj, &a_init, cfg.beta, cfg.prox_max_iter, cfg.prox_tol)?;
    let params = ModelParams { a: prox.a, c: upd.c, q: upd.q, r: upd.r, pi1: upd.pi1, v1: upd.v1 };
    Ok((params, prox.f_trace))
}

/// One EM iteration from `params`.
pub fn em_step(params: &ModelParams, sequences: &[ObservationSequence], cfg: &FitConfig) -> Result<EmStep> {
    let e = e_step(params, sequences, cfg.jitter)?;
    let objective = penalized_objective(e.log_likelihood, &params.a, cfg.beta);
    let (next, prox_f_trace) = m_step(&e.stats, cfg)?;
    Ok(EmStep { params: next, log_likelihood: e.log_likelihood, objective, prox_f_trace })
}

fn check_sequences(sequences: &[ObservationSequence]) -> Result<()> {
    let first = sequences.first().ok_or_else(|| SldsError::invalid("no training sequences"))?;
    for (i, s) in sequences.iter().enumerate() {
        if s.dim() != first.dim() {
            return Err(SldsError::invalid(format!("sequence {i} has dimension {} not {}", s.dim(), first.dim())));
        }
        if s.len() < 2 {
            return Err(SldsError::invalid(format!("sequence {i} has fewer than 2 observations")));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(SldsError::invalid(format!("sequence {i} contains non-finite values")));
        }
    }
    Ok(())
}

/// MAP-EM from the PCA initialisation. `beta = 0` is ordinary maximum-likelihood EM.
pub fn em_fit(sequences: &[ObservationSequence], cfg: &FitConfig) -> Result<(ModelParams, FitDiagnostics)> {
    cfg.validate()?;
    check_sequences(sequences)?;
    let init = init_params(sequences, cfg.states, cfg.seed)?;
    em_fit_from(init, sequences, cfg)
}

/// MAP-EM from given starting parameters.
pub fn em_fit_from(
    init: ModelParams,
    sequences: &[ObservationSequence],
    cfg: &FitConfig,
) -> Result<(ModelParams, FitDiagnostics)> {
    cfg.validate()?;
    check_sequences(sequences)?;
    init.ensure_valid()?;
    if init.obs_dim() != sequences[0].dim() {
        return Err(SldsError::invalid("initial parameters do not match the data dimension"));
    }

    let mut diag = FitDiagnostics::default();
    let mut params = init;
    for iter in 0..cfg.em_max_iter {
        let step = em_step(&params, sequences, cfg)
            .map_err(|e| e.context(format!("EM iteration {}", iter + 1)))?;
        if let Some(&prev) = diag.objective_trace.last() {
            let decrease = prev - step.objective;
            if decrease > MONOTONICITY_TOL {
                diag.monotonicity_breaches.push(MonotonicityBreach { iteration: iter, decrease });
            }
            let rel = (step.objective - prev).abs() / (1.0 + step.objective.abs());
            diag.objective_trace.push(step.objective);
            diag.log_likelihood_trace.push(step.log_likelihood);
            if rel < cfg.em_tol {
                diag.converged = true;
                break;
            }
        } else {
            diag.objective_trace.push(step.objective);
            diag.log_likelihood_trace.push(step.log_likelihood);
        }
        diag.prox_f_traces.push(step.prox_f_trace);
        params = step.params;
        diag.iterations_run += 1;
    }
    diag.final_objective = if diag.converged {
        diag.objective_trace.last().copied().unwrap_or(f64::NAN)
    } else {
        let e = e_step(&params, sequences, cfg.jitter).map_err(|e| e.context("final evaluation"))?;
        penalized_objective(e.log_likelihood, &params.a, cfg.beta)
    };
    diag.zero_fraction_a = zero_fraction(&params.a, 1e-12);
    Ok((params, diag))
}
