use nalgebra::{DMatrix, DVector};

use super::PooledStats;
use crate::error::{Result, SldsError};
use crate::linalg::{psd_floor, right_solve, SpdFactor};
use crate::model::ModelParams;

/// Closed-form maximisers for everything except `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormUpdate {
    pub c: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub pi1: DVector<f64>,
    pub v1: DMatrix<f64>,
}

/// `C`, `R`, `pi1`, `V1` and `Q` from pooled statistics, with `a_for_q` in the `Q` formula.
///
/// Covariances are symmetrised and their eigenvalues floored at `jitter`.
pub fn closed_form_updates(
    stats: &PooledStats,
    a_for_q: &DMatrix<f64>,
    jitter: f64,
) -> Result<ClosedFormUpdate> {
    let l = stats.state_dim();
    if a_for_q.shape() != (l, l) {
        return Err(SldsError::invalid("A used for the Q update has the wrong shape"));
    }
    if stats.n_seq == 0 || stats.t_total <= stats.n_seq {
        return Err(SldsError::invalid("statistics need at least one sequence with T >= 2"));
    }
    let n = stats.n_seq as f64;
    let total = stats.t_total as f64;

    let s_all = SpdFactor::new(&stats.s_all, jitter)
        .map_err(|e| e.context("sum of M_{t|T} (C update)"))?;
    let c = right_solve(&s_all, &stats.s_yz);
    let r = psd_floor(&((&stats.s_yy - &c * stats.s_yz.transpose()) / total), jitter);
    let q = psd_floor(
        &((&stats.s_tail - a_for_q * stats.s_cross.transpose()) / (total - n)),
        jitter,
    );
    let pi1 = &stats.z1_sum / n;
    let v1 = psd_floor(&(&stats.m1_sum / n - &pi1 * pi1.transpose()), jitter);
    Ok(ClosedFormUpdate { c, r, q, pi1, v1 })
}

/// Maximum-likelihood transition matrix `S_cross S_lag^{-1}`.
#[allow(non_snake_case)]
pub fn init_A_closed_form(stats: &PooledStats, jitter: f64) -> Result<DMatrix<f64>> {
    let fac = SpdFactor::new(&stats.s_lag, jitter)
        .map_err(|e| e.context("sum of M_{t-1|T} (A update)"))?;
    Ok(right_solve(&fac, &stats.s_cross))
}

/// Expected complete-data log joint `E[log p(z, y | params)]` under the
/// posterior summarised by `stats`, excluding the prior on `A`.
pub fn expected_log_joint(params: &ModelParams, stats: &PooledStats, jitter: f64) -> Result<f64> {
    const LN_2PI: f64 = 1.837_877_066_409_345_3;
    let l = params.state_dim() as f64;
    let d = params.obs_dim() as f64;
    let n = stats.n_seq as f64;
    let total = stats.t_total as f64;
    let (a, c) = (&params.a, &params.c);

    let v1 = SpdFactor::new(&params.v1, jitter)?;
    let pi = &params.pi1;
    let init_scatter = &stats.m1_sum - &stats.z1_sum * pi.transpose() - pi * stats.z1_sum.transpose()
        + pi * pi.transpose() * n;
    let init = -0.5 * (n * (l * LN_2PI + v1.ln_determinant()) + v1.solve(&init_scatter).trace());

    let q = SpdFactor::new(&params.q, jitter)?;
    let trans_scatter = &stats.s_tail - a * stats.s_cross.transpose() - &stats.s_cross * a.transpose()
        + a * &stats.s_lag * a.transpose();
    let trans = -0.5
        * ((total - n) * (l * LN_2PI + q.ln_determinant()) + q.solve(&trans_scatter).trace());

    let r = SpdFactor::new(&params.r, jitter)?;
    let emit_scatter = &stats.s_yy - c * stats.s_yz.transpose() - &stats.s_yz * c.transpose()
        + c * &stats.s_all * c.transpose();
    let emit = -0.5 * (total * (d * LN_2PI + r.ln_determinant()) + r.solve(&emit_scatter).trace());

    Ok(init + trans + emit)
}
