//! Multi-step observation forecasts from a filtered state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SldsError};
use crate::inference::kalman_filter;
use crate::linalg::symmetrize;
use crate::model::{ModelParams, ObservationSequence};

#[derive(Clone, Debug)]
pub struct Forecast {
    /// Predicted `y` at steps `psi+1 ..= psi+h`.
    pub means: Vec<DVector<f64>>,
    /// Predictive covariances of the same steps.
    pub covs: Vec<DMatrix<f64>>,
}

/// Propagate a state posterior `N(mean, cov)` forward `h` steps.
///
/// Powers of `A` are applied one matrix-vector product at a time.
pub fn forecast_from_state(
    params: &ModelParams,
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    h: usize,
) -> Forecast {
    let mut z = mean.clone();
    let mut p = cov.clone();
    let mut out = Forecast { means: Vec::with_capacity(h), covs: Vec::with_capacity(h) };
    let ct = params.c.transpose();
    for _ in 0..h {
        z = &params.a * z;
        p = symmetrize(&(&params.a * &p * params.a.transpose() + &params.q));
        out.means.push(&params.c * &z);
        out.covs.push(symmetrize(&(&params.c * &p * &ct + &params.r)));
    }
    out
}

/// Filter `prefix` and forecast the next `h` observations.
pub fn forecast(params: &ModelParams, prefix: &ObservationSequence, h: usize) -> Result<Forecast> {
    if prefix.is_empty() {
        return Err(SldsError::invalid("forecast prefix must contain at least one observation"));
    }
    if h == 0 {
        return Err(SldsError::invalid("forecast horizon must be positive"));
    }
    let filt = kalman_filter(params, prefix).map_err(|e| e.context("filtering forecast prefix"))?;
    let last = filt.len() - 1;
    Ok(forecast_from_state(params, &filt.filtered_means[last], &filt.filtered_covs[last], h))
}

/// Point prediction of `y_phi` given `y_1..y_psi`, both one-based. Needs
/// `1 <= psi <= T` and `phi > psi`; `phi` may lie beyond the end of the series.
pub fn predict_observation(
    params: &ModelParams,
    series: &ObservationSequence,
    psi: usize,
    phi: usize,
) -> Result<DVector<f64>> {
    if psi == 0 || psi > series.len() {
        return Err(SldsError::invalid(format!(
            "psi={psi} outside 1..={} for the series",
            series.len()
        )));
    }
    if phi <= psi {
        return Err(SldsError::invalid(format!("phi={phi} must exceed psi={psi}")));
    }
    let f = forecast(params, &series.prefix(psi), phi - psi)?;
    Ok(f.means[phi - psi - 1].clone())
}
