//! Model parameters, observation/state sequences and simulation of
//! `z_t = A z_{t-1} + e_t`, `y_t = C z_t + v_t`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SldsError};
use crate::linalg::{self, PSD_TOL};

/// The full parameter set `{A, C, Q, R, pi1, V1}` of a linear dynamical system.
///
/// The hidden dimension `l` is the size of `A`; the observation dimension `d`
/// is the row count of `C`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// State transition, `l x l`.
    pub a: DMatrix<f64>,
    /// Emission, `d x l`.
    pub c: DMatrix<f64>,
    /// State noise covariance, `l x l`.
    pub q: DMatrix<f64>,
    /// Observation noise covariance, `d x d`.
    pub r: DMatrix<f64>,
    /// Initial state mean, length `l`.
    pub pi1: DVector<f64>,
    /// Initial state covariance, `l x l`.
    pub v1: DMatrix<f64>,
}

impl ModelParams {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Validate and return an error listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_params(self);
        if report.is_ok() {
            Ok(())
        } else {
            Err(SldsError::invalid(report.to_string()))
        }
    }
}

/// One regularly sampled multivariate series; row `t` is `y_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSequence {
    pub values: DMatrix<f64>,
    pub series_id: Option<String>,
}

impl ObservationSequence {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values, series_id: None }
    }

    pub fn with_id(values: DMatrix<f64>, id: impl Into<String>) -> Self {
        Self { values, series_id: Some(id.into()) }
    }

    /// Build from rows `y_1..y_T`.
    pub fn from_rows(rows: &[DVector<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let values = DMatrix::from_fn(rows.len(), d, |t, j| rows[t][j]);
        Self::new(values)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// `y_t` for zero-based `t`.
    pub fn obs(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// The first `len` observations.
    pub fn prefix(&self, len: usize) -> ObservationSequence {
        ObservationSequence {
            values: self.values.rows(0, len).into_owned(),
            series_id: self.series_id.clone(),
        }
    }
}

/// Hidden state trajectory; row `t` is `z_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSequence {
    pub values: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let msgs: Vec<&str> = self.violations.iter().map(|v| v.message.as_str()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Check dimensions, finiteness and PSD-ness of the covariances.
pub fn validate_params(p: &ModelParams) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |field: &'static str, message: String| out.push(Violation { field, message });

    let l = p.a.nrows();
    let d = p.c.nrows();
    if l == 0 {
        push("A", "A is empty (l must be positive)".into());
    }
    if p.a.ncols() != l {
        push("A", format!("A not square ({}x{})", p.a.nrows(), p.a.ncols()));
    }
    if d == 0 {
        push("C", "C has no rows (d must be positive)".into());
    }
    if p.c.ncols() != l {
        push("C", format!("C column count ≠ l ({} vs {l})", p.c.ncols()));
    }
    if p.q.shape() != (l, l) {
        push("Q", format!("Q shape {:?} ≠ ({l}, {l})", p.q.shape()));
    }
    if p.r.shape() != (d, d) {
        push("R", format!("R shape {:?} ≠ ({d}, {d})", p.r.shape()));
    }
    if p.pi1.len() != l {
        push("pi1", format!("pi1 length ≠ l ({} vs {l})", p.pi1.len()));
    }
    if p.v1.shape() != (l, l) {
        push("V1", format!("V1 shape {:?} ≠ ({l}, {l})", p.v1.shape()));
    }

    let fields: [(&'static str, &DMatrix<f64>); 5] =
        [("A", &p.a), ("C", &p.c), ("Q", &p.q), ("R", &p.r), ("V1", &p.v1)];
    for (name, m) in fields {
        if m.iter().any(|v| !v.is_finite()) {
            push(name, format!("{name} has non-finite entries"));
        }
    }
    if p.pi1.iter().any(|v| !v.is_finite()) {
        push("pi1", "pi1 has non-finite entries".into());
    }

    let covs: [(&'static str, &DMatrix<f64>); 3] = [("Q", &p.q), ("R", &p.r), ("V1", &p.v1)];
    for (name, m) in covs {
        if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
            continue;
        }
        if !linalg::is_symmetric(m, 1e-9) {
            push(name, format!("{name} not symmetric"));
        } else if linalg::min_eigenvalue(m) < -PSD_TOL {
            push(name, format!("{name} not PSD"));
        }
    }
    ValidationReport { violations: out }
}

pub use crate::linalg::spectral_radius;

/// Draw a state and observation trajectory of length `len`.
///
/// Gaussian draws use a Cholesky factor of each covariance, falling back to
/// a clamped eigendecomposition for singular ones. Identical seeds give
/// bitwise-identical output.
pub fn simulate(
    params: &ModelParams,
    len: usize,
    seed: u64,
) -> Result<(StateSequence, ObservationSequence)> {
    params.ensure_valid()?;
    if len == 0 {
        return Err(SldsError::invalid("simulation length must be at least 1"));
    }
    let l = params.state_dim();
    let d = params.obs_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q_fac = linalg::psd_factor(&params.q);
    let r_fac = linalg::psd_factor(&params.r);
    let v1_fac = linalg::psd_factor(&params.v1);

    let mut states = DMatrix::zeros(len, l);
    let mut obs = DMatrix::zeros(len, d);
    let mut z = &params.pi1 + &v1_fac * standard_normal(l, &mut rng);
    for t in 0..len {
        if t > 0 {
            z = &params.a * &z + &q_fac * standard_normal(l, &mut rng);
        }
        let y = &params.c * &z + &r_fac * standard_normal(d, &mut rng);
        states.set_row(t, &z.transpose());
        obs.set_row(t, &y.transpose());
    }
    Ok((StateSequence { values: states }, ObservationSequence::new(obs)))
}

pub(crate) fn standard_normal(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Settings for [`random_sparse_model`].
#[derive(Clone, Debug)]
pub struct SparseModelSpec {
    pub states: usize,
    pub obs_dim: usize,
    /// Fraction of entries of `A` that are exactly zero.
    pub zero_fraction: f64,
    /// Spectral radius `A` is rescaled to.
    pub spectral_radius: f64,
    pub state_noise: f64,
    pub obs_noise: f64,
    pub init_var: f64,
    /// Standard deviation of the random initial mean `pi1`.
    pub init_mean_scale: f64,
}

impl SparseModelSpec {
    pub fn new(states: usize, obs_dim: usize, zero_fraction: f64) -> Self {
        Self {
            states,
            obs_dim,
            zero_fraction,
            spectral_radius: 0.9,
            state_noise: 0.1,
            obs_noise: 0.1,
            init_var: 1.0,
            init_mean_scale: 1.0,
        }
    }
}

/// Random stable ground-truth model with a sparse transition matrix.
///
/// `round(zero_fraction * l^2)` entries of `A` are zero (positions uniform),
/// the rest standard normal; `A` is then rescaled to the requested spectral
/// radius. Draws whose radius is numerically zero are rejected.
pub fn random_sparse_model(spec: &SparseModelSpec, seed: u64) -> Result<ModelParams> {
    let l = spec.states;
    let d = spec.obs_dim;
    if l == 0 || d == 0 {
        return Err(SldsError::invalid("states and obs_dim must be positive"));
    }
    if !(0.0..1.0).contains(&spec.zero_fraction) {
        return Err(SldsError::invalid("zero_fraction must lie in [0, 1)"));
    }
    if spec.spectral_radius <= 0.0 {
        return Err(SldsError::invalid("spectral_radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_zero = (spec.zero_fraction * (l * l) as f64).round() as usize;
    let a = loop {
        let mut a = DMatrix::from_fn(l, l, |_, _| StandardNormal.sample(&mut rng));
        for k in index::sample(&mut rng, l * l, n_zero) {
            a[(k / l, k % l)] = 0.0;
        }
        let rho = spectral_radius(&a);
        if rho > 1e-6 {
            break a * (spec.spectral_radius / rho);
        }
    };
    let c = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut rng));
    let params = ModelParams {
        a,
        c,
        q: DMatrix::identity(l, l) * spec.state_noise,
        r: DMatrix::identity(d, d) * spec.obs_noise,
        pi1: standard_normal(l, &mut rng) * spec.init_mean_scale,
        v1: DMatrix::identity(l, l) * spec.init_var,
    };
    params.ensure_valid()?;
    Ok(params)
}

/// Simulate `count` independent series of length `len` with ids `s0`, `s1`, ...
pub fn simulate_dataset(
    params: &ModelParams,
    count: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<ObservationSequence>> {
    (0..count)
        .map(|i| {
            let (_, mut y) = simulate(params, len, crate::derive_seed(seed, i as u64))?;
            y.series_id = Some(format!("s{i}"));
            Ok(y)
        })
        .collect()
}
