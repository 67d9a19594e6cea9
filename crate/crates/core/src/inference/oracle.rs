//! Brute-force reference for the E-step: the joint Gaussian over all states
//! and observations is built explicitly and conditioned by a Schur complement.

use nalgebra::{DMatrix, DVector};

use super::{SmoothedStats, DEFAULT_JITTER, LN_2PI};
use crate::error::{Result, SldsError};
use crate::linalg::{symmetrize, SpdFactor};
use crate::model::{ModelParams, ObservationSequence};

/// Largest `T * l` the oracle accepts.
pub const ORACLE_MAX_SIZE: usize = 64;

struct JointGaussian {
    mean_z: DVector<f64>,
    mean_y: DVector<f64>,
    cov_zz: DMatrix<f64>,
    cov_zy: DMatrix<f64>,
    cov_yy: DMatrix<f64>,
}

fn build_joint(params: &ModelParams, len: usize) -> JointGaussian {
    let l = params.state_dim();
    let d = params.obs_dim();
    let a = &params.a;

    // marginal means/covariances, then A^{t-s} Sigma_s for the off-diagonal blocks
    let mut means = Vec::with_capacity(len);
    let mut marg = Vec::with_capacity(len);
    means.push(params.pi1.clone());
    marg.push(params.v1.clone());
    for t in 1..len {
        means.push(a * &means[t - 1]);
        marg.push(a * &marg[t - 1] * a.transpose() + &params.q);
    }

    let n = len * l;
    let mut cov_zz = DMatrix::zeros(n, n);
    for s in 0..len {
        let mut block = marg[s].clone();
        for t in s..len {
            if t > s {
                block = a * block;
            }
            cov_zz.view_mut((t * l, s * l), (l, l)).copy_from(&block);
            cov_zz.view_mut((s * l, t * l), (l, l)).copy_from(&block.transpose());
        }
    }

    let mut emit = DMatrix::zeros(len * d, n);
    let mut noise = DMatrix::zeros(len * d, len * d);
    for t in 0..len {
        emit.view_mut((t * d, t * l), (d, l)).copy_from(&params.c);
        noise.view_mut((t * d, t * d), (d, d)).copy_from(&params.r);
    }

    let mean_z = DVector::from_iterator(n, means.iter().flat_map(|m| m.iter().cloned()));
    let mean_y = &emit * &mean_z;
    let cov_zy = &cov_zz * emit.transpose();
    let cov_yy = symmetrize(&(&emit * &cov_zy + noise));
    JointGaussian { mean_z, mean_y, cov_zz, cov_zy, cov_yy }
}

fn check(params: &ModelParams, y: &ObservationSequence) -> Result<()> {
    params.ensure_valid()?;
    if y.is_empty() || y.dim() != params.obs_dim() {
        return Err(SldsError::invalid("observation sequence does not match the model"));
    }
    if y.len() * params.state_dim() > ORACLE_MAX_SIZE {
        return Err(SldsError::invalid(format!(
            "oracle limited to T*l <= {ORACLE_MAX_SIZE}, got {}",
            y.len() * params.state_dim()
        )));
    }
    Ok(())
}

fn stacked(y: &ObservationSequence) -> DVector<f64> {
    DVector::from_iterator(y.len() * y.dim(), (0..y.len()).flat_map(|t| y.obs(t).into_iter().cloned().collect::<Vec<_>>()))
}

/// Posterior moments read directly off the conditioned joint Gaussian.
pub fn brute_force_smoother_oracle(
    params: &ModelParams,
    y: &ObservationSequence,
) -> Result<SmoothedStats> {
    check(params, y)?;
    let len = y.len();
    let l = params.state_dim();
    let joint = build_joint(params, len);
    let fac = SpdFactor::new(&joint.cov_yy, DEFAULT_JITTER)?;
    let resid = stacked(y) - &joint.mean_y;
    let post_mean = &joint.mean_z + &joint.cov_zy * fac.solve_vec(&resid);
    let post_cov = symmetrize(&(&joint.cov_zz - &joint.cov_zy * fac.solve(&joint.cov_zy.transpose())));

    let zhat: Vec<DVector<f64>> = (0..len).map(|t| post_mean.rows(t * l, l).into_owned()).collect();
    let covs: Vec<DMatrix<f64>> =
        (0..len).map(|t| post_cov.view((t * l, t * l), (l, l)).into_owned()).collect();
    let m = (0..len).map(|t| &covs[t] + &zhat[t] * zhat[t].transpose()).collect();
    let mcross = (1..len)
        .map(|t| post_cov.view((t * l, (t - 1) * l), (l, l)).into_owned() + &zhat[t] * zhat[t - 1].transpose())
        .collect();
    Ok(SmoothedStats { zhat, covs, m, mcross })
}

/// `log N(y; mean, cov)` with mean and covariance of the stacked observations built explicitly.
pub fn joint_gaussian_log_likelihood(params: &ModelParams, y: &ObservationSequence) -> Result<f64> {
    check(params, y)?;
    let joint = build_joint(params, y.len());
    let fac = SpdFactor::new(&joint.cov_yy, DEFAULT_JITTER)?;
    let resid = stacked(y) - &joint.mean_y;
    let n = resid.len() as f64;
    Ok(-0.5 * (n * LN_2PI + fac.ln_determinant() + resid.dot(&fac.solve_vec(&resid))))
}
