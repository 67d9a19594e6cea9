//! Exact E-step: Kalman filter, Rauch-Tung-Striebel smoother and the
//! posterior moments `E[z_t|y]`, `E[z_t z_t'|y]`, `E[z_t z_{t-1}'|y]`.

mod batch;
mod oracle;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SldsError};
use crate::linalg::{right_solve, symmetrize, SpdFactor};
use crate::model::{ModelParams, ObservationSequence};

pub use batch::{filtered_means, pooled_e_step, schedules_for, CovarianceSchedule};
pub use oracle::{brute_force_smoother_oracle, joint_gaussian_log_likelihood, ORACLE_MAX_SIZE};

/// Jitter used by inference when factorising innovation / predicted covariances.
pub const DEFAULT_JITTER: f64 = 1e-9;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug)]
pub struct FilterResult {
    /// `z_{t|t}`
    pub filtered_means: Vec<DVector<f64>>,
    /// `P_{t|t}`
    pub filtered_covs: Vec<DMatrix<f64>>,
    /// `z_{t|t-1}`; for `t = 1` this is `pi1`.
    pub predicted_means: Vec<DVector<f64>>,
    /// `P_{t|t-1}`; for `t = 1` this is `V1`.
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
}

impl FilterResult {
    pub fn len(&self) -> usize {
        self.filtered_means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filtered_means.is_empty()
    }
}

/// Posterior sufficient statistics of one sequence.
#[derive(Clone, Debug)]
pub struct SmoothedStats {
    /// `z_{t|T}`
    pub zhat: Vec<DVector<f64>>,
    /// `Cov(z_t | y)`
    pub covs: Vec<DMatrix<f64>>,
    /// `M_{t|T} = E[z_t z_t' | y]`
    pub m: Vec<DMatrix<f64>>,
    /// `M_{t,t-1|T} = E[z_t z_{t-1}' | y]`; entry `k` pairs `z_{k+2}` with `z_{k+1}` (one-based).
    pub mcross: Vec<DMatrix<f64>>,
}

impl SmoothedStats {
    pub fn len(&self) -> usize {
        self.zhat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zhat.is_empty()
    }
}

fn check_inputs(params: &ModelParams, y: &ObservationSequence) -> Result<()> {
    params.ensure_valid()?;
    if y.is_empty() {
        return Err(SldsError::invalid("observation sequence is empty"));
    }
    if y.dim() != params.obs_dim() {
        return Err(SldsError::invalid(format!(
            "observation dimension {} does not match model dimension {}",
            y.dim(),
            params.obs_dim()
        )));
    }
    if y.values.iter().any(|v| !v.is_finite()) {
        return Err(SldsError::invalid("observations must be finite"));
    }
    Ok(())
}

/// Forward Kalman recursions with a Joseph-form covariance update.
pub fn kalman_filter(params: &ModelParams, y: &ObservationSequence) -> Result<FilterResult> {
    kalman_filter_with_jitter(params, y, DEFAULT_JITTER)
}

pub fn kalman_filter_with_jitter(
    params: &ModelParams,
    y: &ObservationSequence,
    jitter: f64,
) -> Result<FilterResult> {
    check_inputs(params, y)?;
    let len = y.len();
    let l = params.state_dim();
    let d = params.obs_dim();
    let a = &params.a;
    let c = &params.c;
    let ct = c.transpose();
    let eye = DMatrix::<f64>::identity(l, l);

    let mut out = FilterResult {
        filtered_means: Vec::with_capacity(len),
        filtered_covs: Vec::with_capacity(len),
        predicted_means: Vec::with_capacity(len),
        predicted_covs: Vec::with_capacity(len),
        log_likelihood: 0.0,
    };

    for t in 0..len {
        let (m_pred, p_pred) = if t == 0 {
            (params.pi1.clone(), symmetrize(&params.v1))
        } else {
            let m = &out.filtered_means[t - 1];
            let p = &out.filtered_covs[t - 1];
            (a * m, symmetrize(&(a * p * a.transpose() + &params.q)))
        };

        let pct = &p_pred * &ct;
        let s = symmetrize(&(c * &pct + &params.r));
        let s_fac = SpdFactor::new(&s, jitter)
            .map_err(|e| e.context(format!("innovation covariance at t={}", t + 1)))?;
        let innov = y.obs(t) - c * &m_pred;
        let gain = right_solve(&s_fac, &pct);

        let m_filt = &m_pred + &gain * &innov;
        let ikc = &eye - &gain * c;
        let p_filt = symmetrize(
            &(&ikc * &p_pred * ikc.transpose() + &gain * &params.r * gain.transpose()),
        );

        let mahal = innov.dot(&s_fac.solve_vec(&innov));
        out.log_likelihood += -0.5 * (d as f64 * LN_2PI + s_fac.ln_determinant() + mahal);

        out.predicted_means.push(m_pred);
        out.predicted_covs.push(p_pred);
        out.filtered_means.push(m_filt);
        out.filtered_covs.push(p_filt);
    }
    if !out.log_likelihood.is_finite() {
        return Err(SldsError::numerical("log-likelihood is not finite"));
    }
    Ok(out)
}

/// Backward RTS pass turning filter output into posterior sufficient statistics.
pub fn rts_smooth(params: &ModelParams, filt: &FilterResult) -> Result<SmoothedStats> {
    rts_smooth_with_jitter(params, filt, DEFAULT_JITTER)
}

pub fn rts_smooth_with_jitter(
    params: &ModelParams,
    filt: &FilterResult,
    jitter: f64,
) -> Result<SmoothedStats> {
    let len = filt.len();
    if len == 0 {
        return Err(SldsError::invalid("filter result is empty"));
    }
    if filt.filtered_means[0].len() != params.state_dim() {
        return Err(SldsError::invalid("filter result does not match model state dimension"));
    }
    let at = params.a.transpose();
    let mut zhat = filt.filtered_means.clone();
    let mut covs = filt.filtered_covs.clone();
    let mut gains: Vec<DMatrix<f64>> = vec![DMatrix::zeros(0, 0); len.saturating_sub(1)];

    for t in (0..len.saturating_sub(1)).rev() {
        let p_pred_next = &filt.predicted_covs[t + 1];
        let fac = SpdFactor::new(p_pred_next, jitter)
            .map_err(|e| e.context(format!("predicted covariance at t={}", t + 2)))?;
        let j = right_solve(&fac, &(&filt.filtered_covs[t] * &at));
        let dm = &zhat[t + 1] - &filt.predicted_means[t + 1];
        zhat[t] = &filt.filtered_means[t] + &j * dm;
        let dp = &covs[t + 1] - p_pred_next;
        covs[t] = symmetrize(&(&filt.filtered_covs[t] + &j * dp * j.transpose()));
        gains[t] = j;
    }

    let m = (0..len)
        .map(|t| &covs[t] + &zhat[t] * zhat[t].transpose())
        .collect();
    let mcross = (1..len)
        .map(|t| &covs[t] * gains[t - 1].transpose() + &zhat[t] * zhat[t - 1].transpose())
        .collect();
    Ok(SmoothedStats { zhat, covs, m, mcross })
}

/// Filter then smooth one sequence.
pub fn smooth_sequence(
    params: &ModelParams,
    y: &ObservationSequence,
    jitter: f64,
) -> Result<(SmoothedStats, f64)> {
    let filt = kalman_filter_with_jitter(params, y, jitter)?;
    let stats = rts_smooth_with_jitter(params, &filt, jitter)?;
    Ok((stats, filt.log_likelihood))
}

/// `log p(y_1..y_T | params)`.
pub fn log_likelihood(params: &ModelParams, y: &ObservationSequence) -> Result<f64> {
    Ok(kalman_filter(params, y)?.log_likelihood)
}

/// Sum of per-sequence log-likelihoods; sequences are independent given the parameters.
pub fn total_log_likelihood(params: &ModelParams, seqs: &[ObservationSequence]) -> Result<f64> {
    seqs.iter().map(|y| log_likelihood(params, y)).sum()
}
