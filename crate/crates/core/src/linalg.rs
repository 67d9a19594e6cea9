//! Small dense linear-algebra helpers shared by the filter, smoother and M-step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SldsError};

/// Tolerance used when deciding whether a covariance is PSD.
pub const PSD_TOL: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= tol * scale
}

/// Symmetrize and clamp every eigenvalue below `floor` up to `floor`.
pub fn psd_floor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if sym.is_empty() {
        return sym;
    }
    let eig = sym.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|v| v.max(floor));
    let rebuilt =
        &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&rebuilt)
}

/// A factor `L` with `L L' = m` for a symmetric PSD `m`.
///
/// Cholesky when it succeeds, otherwise the eigendecomposition with negative
/// eigenvalues clamped to zero, so singular covariances (e.g. `Q = 0`) are fine.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if let Some(ch) = sym.clone().cholesky() {
        return ch.l();
    }
    let eig = sym.symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots)
}

/// Cholesky factorisation of a symmetric matrix with a single jitter retry.
///
/// On failure `jitter * (trace / n) * I` is added (with `trace / n` replaced by 1
/// when it is not positive) and the factorisation retried once.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(SldsError::invalid(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(SldsError::numerical("matrix has non-finite entries"));
        }
        let sym = symmetrize(m);
        if let Some(chol) = sym.clone().cholesky() {
            return Ok(Self { chol });
        }
        let n = sym.nrows().max(1) as f64;
        let mean_diag = sym.trace() / n;
        let scale = if mean_diag > 0.0 { mean_diag } else { 1.0 };
        let bumped = sym + DMatrix::identity(m.nrows(), m.ncols()) * (jitter * scale);
        bumped
            .cholesky()
            .map(|chol| Self { chol })
            .ok_or_else(|| SldsError::numerical("matrix not positive definite after jitter"))
    }

    /// `m^{-1} b`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn ln_determinant(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

/// `b * m^{-1}` for symmetric `m`, computed as `(m^{-1} b')'`.
pub fn right_solve(factor: &SpdFactor, b: &DMatrix<f64>) -> DMatrix<f64> {
    factor.solve(&b.transpose()).transpose()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "spectral_radius needs a square matrix");
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Entries `|x| < tol` as a fraction of all entries.
pub fn zero_fraction(a: &DMatrix<f64>, tol: f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().filter(|v| v.abs() < tol).count() as f64 / a.len() as f64
}

/// Sum of absolute values of all entries.
pub fn l1_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}
