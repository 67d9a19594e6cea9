use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SldsError};
use crate::inference::SmoothedStats;
use crate::model::ObservationSequence;

/// Sufficient statistics summed over time and over sequences.
///
/// `t` ranges below are one-based within each sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledStats {
    /// `sum_{t=2..T} M_{t-1|T}`
    pub s_lag: DMatrix<f64>,
    /// `sum_{t=2..T} M_{t,t-1|T}`
    pub s_cross: DMatrix<f64>,
    /// `sum_{t=1..T} M_{t|T}`
    pub s_all: DMatrix<f64>,
    /// `sum_{t=2..T} M_{t|T}`
    pub s_tail: DMatrix<f64>,
    /// `sum_{t=1..T} y_t z_{t|T}'`
    pub s_yz: DMatrix<f64>,
    /// `sum_{t=1..T} y_t y_t'`
    pub s_yy: DMatrix<f64>,
    /// `sum z_{1|T}`
    pub z1_sum: DVector<f64>,
    /// `sum M_{1|T}`
    pub m1_sum: DMatrix<f64>,
    /// Number of sequences.
    pub n_seq: usize,
    /// Total number of time steps over all sequences.
    pub t_total: usize,
}

impl PooledStats {
    pub fn zeros(l: usize, d: usize) -> Self {
        Self {
            s_lag: DMatrix::zeros(l, l),
            s_cross: DMatrix::zeros(l, l),
            s_all: DMatrix::zeros(l, l),
            s_tail: DMatrix::zeros(l, l),
            s_yz: DMatrix::zeros(d, l),
            s_yy: DMatrix::zeros(d, d),
            z1_sum: DVector::zeros(l),
            m1_sum: DMatrix::zeros(l, l),
            n_seq: 0,
            t_total: 0,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.s_all.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.s_yy.nrows()
    }

    /// Add one sequence's contribution.
    pub fn accumulate(&mut self, stats: &SmoothedStats, y: &ObservationSequence) {
        let len = stats.len();
        for t in 0..len {
            let yt = y.obs(t);
            self.s_all += &stats.m[t];
            self.s_yz += &yt * stats.zhat[t].transpose();
            self.s_yy += &yt * yt.transpose();
            if t > 0 {
                self.s_tail += &stats.m[t];
                self.s_lag += &stats.m[t - 1];
                self.s_cross += &stats.mcross[t - 1];
            }
        }
        self.z1_sum += &stats.zhat[0];
        self.m1_sum += &stats.m[0];
        self.n_seq += 1;
        self.t_total += len;
    }
}

/// Pool per-sequence statistics in list order. No normalisation is applied.
pub fn pool_stats(
    stats_list: &[SmoothedStats],
    sequences: &[ObservationSequence],
) -> Result<PooledStats> {
    if stats_list.is_empty() {
        return Err(SldsError::invalid("pool_stats needs at least one sequence"));
    }
    if stats_list.len() != sequences.len() {
        return Err(SldsError::invalid(format!(
            "{} statistic sets for {} sequences",
            stats_list.len(),
            sequences.len()
        )));
    }
    let l = stats_list[0].zhat.first().map_or(0, |z| z.len());
    let d = sequences[0].dim();
    let mut pooled = PooledStats::zeros(l, d);
    for (i, (st, y)) in stats_list.iter().zip(sequences).enumerate() {
        if st.len() != y.len() {
            return Err(SldsError::invalid(format!(
                "sequence {i}: statistics cover {} steps but the sequence has {}",
                st.len(),
                y.len()
            )));
        }
        if y.len() < 2 {
            return Err(SldsError::invalid(format!("sequence {i} has fewer than 2 observations")));
        }
        if y.dim() != d || st.zhat[0].len() != l || st.mcross.len() != y.len() - 1 {
            return Err(SldsError::invalid(format!("sequence {i}: inconsistent dimensions")));
        }
        pooled.accumulate(st, y);
    }
    Ok(pooled)
}
