use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SldsError};
use crate::model::{standard_normal, ModelParams, ObservationSequence};

/// Scale of the random emission columns used when `l` exceeds `d`,
/// relative to the root mean observation variance.
const EXTRA_COLUMN_SCALE: f64 = 1.0;
const R_FLOOR: f64 = 1e-6;
/// Lower bound on the initial `R` relative to each variable's variance. Without
/// it `R` starts at the absolute floor whenever `l >= d`, and `R -> 0` is a
/// fixed point of EM.
const R_RELATIVE_FLOOR: f64 = 0.1;

/// PCA-based starting point for EM.
///
/// The first `min(l, d)` columns of `C` are principal directions of the
/// pooled, mean-centred observations scaled by their standard deviations,
/// each signed so its largest-magnitude entry is positive. Columns beyond
/// `d` are Gaussian draws from `seed` at the scale of the observations.
/// `A = 0.5 I`, `Q = I`, `V1 = I`, `R` is the diagonal of residual variances
/// (floored at a tenth of each variable's variance) and `pi1` the
/// least-squares state for the mean first observation.
pub fn init_params(sequences: &[ObservationSequence], l: usize, seed: u64) -> Result<ModelParams> {
    if l == 0 {
        return Err(SldsError::invalid("hidden dimension must be positive"));
    }
    let first = sequences
        .first()
        .ok_or_else(|| SldsError::invalid("no sequences to initialise from"))?;
    let d = first.dim();
    if d == 0 || sequences.iter().any(|s| s.dim() != d || s.is_empty()) {
        return Err(SldsError::invalid("sequences must be nonempty with a common dimension"));
    }
    let count: usize = sequences.iter().map(|s| s.len()).sum();
    if count < l {
        return Err(SldsError::invalid(format!(
            "{count} pooled observations are fewer than {l} hidden states"
        )));
    }

    let mut mean = DVector::zeros(d);
    for s in sequences {
        for row in s.values.row_iter() {
            mean += row.transpose();
        }
    }
    mean /= count as f64;
    let mut scatter = DMatrix::zeros(d, d);
    for s in sequences {
        for row in s.values.row_iter() {
            let x = row.transpose() - &mean;
            scatter += &x * x.transpose();
        }
    }
    let cov = scatter / count as f64;

    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let k = l.min(d);
    let mut dirs = DMatrix::zeros(d, k);
    let mut c = DMatrix::zeros(d, l);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let lead = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            v = -v;
        }
        let sd = eig.eigenvalues[idx].max(0.0).sqrt();
        dirs.set_column(col, &v);
        c.set_column(col, &(v * sd));
    }
    if l > d {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = EXTRA_COLUMN_SCALE * (cov.trace() / d as f64).max(0.0).sqrt();
        for col in d..l {
            c.set_column(col, &(standard_normal(d, &mut rng) * scale));
        }
    }

    // residual covariance after projecting onto the retained directions
    let proj = DMatrix::identity(d, d) - &dirs * dirs.transpose();
    let resid = &proj * &cov * proj.transpose();
    let r = DMatrix::from_diagonal(&DVector::from_fn(d, |k, _| {
        resid[(k, k)].max(R_RELATIVE_FLOOR * cov[(k, k)]).max(R_FLOOR)
    }));

    let mut first_mean = DVector::zeros(d);
    for s in sequences {
        first_mean += s.obs(0);
    }
    first_mean /= sequences.len() as f64;
    let pinv = c
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| SldsError::numerical(format!("pseudo-inverse of C: {e}")))?;
    let pi1 = pinv * first_mean;

    Ok(ModelParams {
        a: DMatrix::identity(l, l) * 0.5,
        c,
        q: DMatrix::identity(l, l),
        r,
        pi1,
        v1: DMatrix::identity(l, l),
    })
}
