//! E-step for many sequences at once.
//!
//! The filter and smoother covariance recursions do not depend on the
//! observations, so they are run once per distinct sequence length and only
//! the mean recursions are run per sequence.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::LN_2PI;
use crate::error::{Result, SldsError};
use crate::learning::PooledStats;
use crate::linalg::{right_solve, symmetrize, SpdFactor};
use crate::model::{ModelParams, ObservationSequence};

/// Observation-independent part of filtering and smoothing a length-`T` sequence.
#[derive(Clone, Debug)]
pub struct CovarianceSchedule {
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    /// Kalman gains `K_t`.
    pub gains: Vec<DMatrix<f64>>,
    innovation: Vec<SpdFactor>,
    /// RTS gains `J_t`, `T - 1` of them.
    pub smoother_gains: Vec<DMatrix<f64>>,
    pub smoothed_covs: Vec<DMatrix<f64>>,
    /// `Cov(z_t, z_{t-1} | y)` for `t = 2..T`.
    pub cross_covs: Vec<DMatrix<f64>>,
}

impl CovarianceSchedule {
    pub fn new(params: &ModelParams, len: usize, jitter: f64) -> Result<Self> {
        if len == 0 {
            return Err(SldsError::invalid("sequence length must be positive"));
        }
        let l = params.state_dim();
        let (a, c) = (&params.a, &params.c);
        let (at, ct) = (a.transpose(), c.transpose());
        let eye = DMatrix::<f64>::identity(l, l);

        let mut predicted_covs = Vec::with_capacity(len);
        let mut filtered_covs: Vec<DMatrix<f64>> = Vec::with_capacity(len);
        let mut gains = Vec::with_capacity(len);
        let mut innovation = Vec::with_capacity(len);
        for t in 0..len {
            let p_pred = if t == 0 {
                symmetrize(&params.v1)
            } else {
                symmetrize(&(a * &filtered_covs[t - 1] * &at + &params.q))
            };
            let pct = &p_pred * &ct;
            let s = symmetrize(&(c * &pct + &params.r));
            let fac = SpdFactor::new(&s, jitter)
                .map_err(|e| e.context(format!("innovation covariance at t={}", t + 1)))?;
            let k = right_solve(&fac, &pct);
            let ikc = &eye - &k * c;
            let p_filt = symmetrize(&(&ikc * &p_pred * ikc.transpose() + &k * &params.r * k.transpose()));
            predicted_covs.push(p_pred);
            filtered_covs.push(p_filt);
            gains.push(k);
            innovation.push(fac);
        }

        let mut smoothed_covs = filtered_covs.clone();
        let mut smoother_gains = vec![DMatrix::zeros(0, 0); len - 1];
        for t in (0..len - 1).rev() {
            let fac = SpdFactor::new(&predicted_covs[t + 1], jitter)
                .map_err(|e| e.context(format!("predicted covariance at t={}", t + 2)))?;
            let j = right_solve(&fac, &(&filtered_covs[t] * &at));
            let dp = &smoothed_covs[t + 1] - &predicted_covs[t + 1];
            smoothed_covs[t] = symmetrize(&(&filtered_covs[t] + &j * dp * j.transpose()));
            smoother_gains[t] = j;
        }
        let cross_covs = (1..len).map(|t| &smoothed_covs[t] * smoother_gains[t - 1].transpose()).collect();
        Ok(Self { filtered_covs, predicted_covs, gains, innovation, smoother_gains, smoothed_covs, cross_covs })
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Filtered means `z_{t|t}`, predicted means `z_{t|t-1}` and the log-likelihood.
    pub fn filter_means(
        &self,
        params: &ModelParams,
        y: &ObservationSequence,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, f64) {
        let (filt, pred, ll) = self.filter_means_batch(params, &[y]);
        (columns(filt), columns(pred), ll[0])
    }

    /// Smoothed means `z_{t|T}` plus the log-likelihood.
    pub fn smooth_means(&self, params: &ModelParams, y: &ObservationSequence) -> (Vec<DVector<f64>>, f64) {
        let (zhat, ll) = self.smooth_means_batch(params, &[y]);
        (columns(zhat), ll[0])
    }

    /// Filter means for equal-length sequences at once: entry `t` holds one
    /// column per sequence. Also returns each sequence's log-likelihood.
    pub fn filter_means_batch(
        &self,
        params: &ModelParams,
        ys: &[&ObservationSequence],
    ) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, Vec<f64>) {
        let n = ys.len();
        let d = params.obs_dim();
        let len = self.len();
        debug_assert!(ys.iter().all(|y| y.len() == len));
        let mut filt: Vec<DMatrix<f64>> = Vec::with_capacity(len);
        let mut pred = Vec::with_capacity(len);
        let mut ll = vec![0.0; n];
        for t in 0..len {
            let m_pred = if t == 0 {
                DMatrix::from_fn(params.state_dim(), n, |i, _| params.pi1[i])
            } else {
                &params.a * &filt[t - 1]
            };
            let obs = DMatrix::from_fn(d, n, |k, j| ys[j].values[(t, k)]);
            let innov = obs - &params.c * &m_pred;
            let fac = &self.innovation[t];
            let solved = fac.solve(&innov);
            let base = d as f64 * LN_2PI + fac.ln_determinant();
            for (j, total) in ll.iter_mut().enumerate() {
                *total -= 0.5 * (base + innov.column(j).dot(&solved.column(j)));
            }
            filt.push(&m_pred + &self.gains[t] * innov);
            pred.push(m_pred);
        }
        (filt, pred, ll)
    }

    /// Smoothed means for equal-length sequences, laid out as in
    /// [`filter_means_batch`](Self::filter_means_batch).
    pub fn smooth_means_batch(
        &self,
        params: &ModelParams,
        ys: &[&ObservationSequence],
    ) -> (Vec<DMatrix<f64>>, Vec<f64>) {
        let (mut zhat, pred, ll) = self.filter_means_batch(params, ys);
        for t in (0..self.len().saturating_sub(1)).rev() {
            let next = &zhat[t + 1] - &pred[t + 1];
            zhat[t] += &self.smoother_gains[t] * next;
        }
        (zhat, ll)
    }
}

fn columns(ms: Vec<DMatrix<f64>>) -> Vec<DVector<f64>> {
    ms.into_iter().map(|m| m.column(0).into_owned()).collect()
}

/// Indices of `sequences` grouped by length, in increasing order within each group.
fn length_groups(sequences: &[ObservationSequence]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, y) in sequences.iter().enumerate() {
        groups.entry(y.len()).or_default().push(i);
    }
    groups
}

fn check(params: &ModelParams, sequences: &[ObservationSequence]) -> Result<()> {
    params.ensure_valid()?;
    for (i, y) in sequences.iter().enumerate() {
        if y.dim() != params.obs_dim() {
            return Err(SldsError::invalid(format!("sequence {i}: dimension {} ≠ {}", y.dim(), params.obs_dim())));
        }
        if y.values.iter().any(|v| !v.is_finite()) {
            return Err(SldsError::invalid(format!("sequence {i}: non-finite observations")));
        }
    }
    Ok(())
}

/// One covariance schedule per distinct length in `sequences`.
pub fn schedules_for(
    params: &ModelParams,
    sequences: &[ObservationSequence],
    jitter: f64,
) -> Result<BTreeMap<usize, CovarianceSchedule>> {
    check(params, sequences)?;
    let mut out = BTreeMap::new();
    for y in sequences {
        if y.is_empty() {
            return Err(SldsError::invalid("empty observation sequence"));
        }
        if let Entry::Vacant(slot) = out.entry(y.len()) {
            slot.insert(CovarianceSchedule::new(params, y.len(), jitter)?);
        }
    }
    Ok(out)
}

/// Pooled sufficient statistics and total log-likelihood over all sequences.
///
/// Equivalent to smoothing each sequence and calling `pool_stats`. Sequences
/// are processed in a fixed order (by length, then index) so the result is
/// reproducible.
pub fn pooled_e_step(
    params: &ModelParams,
    sequences: &[ObservationSequence],
    jitter: f64,
) -> Result<(PooledStats, f64)> {
    if sequences.is_empty() {
        return Err(SldsError::invalid("no sequences"));
    }
    if let Some(i) = sequences.iter().position(|y| y.len() < 2) {
        return Err(SldsError::invalid(format!("sequence {i} has fewer than 2 observations")));
    }
    let schedules = schedules_for(params, sequences, jitter)?;
    let l = params.state_dim();
    let mut pooled = PooledStats::zeros(l, params.obs_dim());
    let mut lls = vec![0.0; sequences.len()];

    for (len, idx) in length_groups(sequences) {
        let sched = &schedules[&len];
        let count = idx.len() as f64;

        // covariance parts are shared by every sequence of this length
        let mut all = DMatrix::zeros(l, l);
        for p in &sched.smoothed_covs {
            all += p;
        }
        let first = &sched.smoothed_covs[0];
        let last = &sched.smoothed_covs[len - 1];
        let mut cross = DMatrix::zeros(l, l);
        for p in &sched.cross_covs {
            cross += p;
        }
        pooled.s_all += &all * count;
        pooled.s_tail += (&all - first) * count;
        pooled.s_lag += (&all - last) * count;
        pooled.s_cross += cross * count;
        pooled.m1_sum += first * count;

        // mean parts, one column per sequence
        let ys: Vec<&ObservationSequence> = idx.iter().map(|&i| &sequences[i]).collect();
        let (zhat, group_ll) = sched.smooth_means_batch(params, &ys);
        for (&i, v) in idx.iter().zip(group_ll) {
            lls[i] = v;
        }
        let mut zz_all = DMatrix::zeros(l, l);
        for (t, z) in zhat.iter().enumerate() {
            let zz = z * z.transpose();
            let obs = DMatrix::from_fn(params.obs_dim(), ys.len(), |k, j| ys[j].values[(t, k)]);
            pooled.s_yz += &obs * z.transpose();
            pooled.s_yy += &obs * obs.transpose();
            if t > 0 {
                pooled.s_cross += z * zhat[t - 1].transpose();
            }
            zz_all += zz;
        }
        let zz_first = &zhat[0] * zhat[0].transpose();
        let zz_last = &zhat[len - 1] * zhat[len - 1].transpose();
        pooled.s_tail += &zz_all - &zz_first;
        pooled.s_lag += &zz_all - zz_last;
        pooled.s_all += zz_all;
        pooled.z1_sum += zhat[0].column_sum();
        pooled.m1_sum += zz_first;
        pooled.n_seq += ys.len();
        pooled.t_total += len * ys.len();
    }
    let ll: f64 = lls.iter().sum();
    if !ll.is_finite() {
        return Err(SldsError::numerical("log-likelihood is not finite"));
    }
    Ok((pooled, ll))
}

/// Filtered means `z_{t|t}` of every sequence.
pub fn filtered_means(
    params: &ModelParams,
    sequences: &[ObservationSequence],
    jitter: f64,
) -> Result<Vec<Vec<DVector<f64>>>> {
    let schedules = schedules_for(params, sequences, jitter)?;
    let mut out = vec![Vec::new(); sequences.len()];
    for (len, idx) in length_groups(sequences) {
        let ys: Vec<&ObservationSequence> = idx.iter().map(|&i| &sequences[i]).collect();
        let (filt, _, _) = schedules[&len].filter_means_batch(params, &ys);
        for (col, &i) in idx.iter().enumerate() {
            out[i] = filt.iter().map(|m| m.column(col).into_owned()).collect();
        }
    }
    Ok(out)
}
