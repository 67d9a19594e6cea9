//! Proximal gradient descent for the l1-penalised transition matrix.
//!
//! The smooth part is
//! `g(A) = 1/2 tr(Q^{-1} (S_tail - A S_cross' - S_cross A' + A S_lag A'))`,
//! the non-smooth part `h(A) = beta * sum |A_ij|`. With the fixed step
//! `alpha = 1 / (||Q^{-1}||_F ||S_lag||_F)` each iteration is
//! `A <- soft_threshold(A - alpha grad g(A), beta alpha)`.

use nalgebra::DMatrix;

use super::{FitConfig, PooledStats};
use crate::error::{Result, SldsError};
use crate::linalg::{l1_norm, symmetrize, SpdFactor};

/// Elementwise shrinkage towards zero by `tau`.
pub fn soft_threshold(a: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    a.map(|v| {
        if v > tau {
            v - tau
        } else if v < -tau {
            v + tau
        } else {
            0.0
        }
    })
}

/// The transition-matrix subproblem for a fixed `Q`; `Q^{-1}` is factorised once.
#[derive(Clone, Debug)]
pub struct TransitionObjective {
    q_inv: DMatrix<f64>,
    s_lag: DMatrix<f64>,
    s_cross: DMatrix<f64>,
    s_tail: DMatrix<f64>,
    q_inv_cross: DMatrix<f64>,
    tail_term: f64,
}

/// An iterate with the two products that give both `g` and `grad_g`.
struct Iterate {
    a: DMatrix<f64>,
    /// `A S_lag`
    w: DMatrix<f64>,
    g: f64,
}

impl Iterate {
    fn new(obj: &TransitionObjective, a: DMatrix<f64>) -> Self {
        let x = &obj.q_inv * &a;
        let w = &a * &obj.s_lag;
        let g = 0.5 * (obj.tail_term - 2.0 * x.dot(&obj.s_cross) + x.dot(&w));
        Self { a, w, g }
    }
}

impl TransitionObjective {
    pub fn new(q: &DMatrix<f64>, stats: &PooledStats, jitter: f64) -> Result<Self> {
        if q.shape() != stats.s_lag.shape() {
            return Err(SldsError::invalid("Q does not match the state dimension of the statistics"));
        }
        let fac = SpdFactor::new(q, jitter).map_err(|e| e.context("Q inverse"))?;
        let q_inv = symmetrize(&fac.inverse());
        Ok(Self {
            q_inv_cross: &q_inv * &stats.s_cross,
            tail_term: q_inv.dot(&stats.s_tail),
            q_inv,
            s_lag: stats.s_lag.clone(),
            s_cross: stats.s_cross.clone(),
            s_tail: stats.s_tail.clone(),
        })
    }

    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }

    pub fn g(&self, a: &DMatrix<f64>) -> f64 {
        let scatter = &self.s_tail - a * self.s_cross.transpose() - &self.s_cross * a.transpose()
            + a * &self.s_lag * a.transpose();
        0.5 * (&self.q_inv * scatter).trace()
    }

    pub fn f(&self, a: &DMatrix<f64>, beta: f64) -> f64 {
        self.g(a) + beta * l1_norm(a)
    }

    /// `Q^{-1} (A S_lag - S_cross)`
    pub fn grad_g(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q_inv * (a * &self.s_lag - &self.s_cross)
    }

    /// `||Q^{-1}||_F * ||S_lag||_F`, an upper bound on the Lipschitz constant of `grad_g`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.q_inv.norm() * self.s_lag.norm()
    }

    pub fn step_size(&self) -> Result<f64> {
        let lip = self.lipschitz_constant();
        if !(lip > 0.0) || !lip.is_finite() {
            return Err(SldsError::invalid(
                "step size undefined: sum of M_{t-1|T} is zero or not finite",
            ));
        }
        Ok(1.0 / lip)
    }

    /// One proximal gradient step.
    pub fn prox_step(&self, a: &DMatrix<f64>, alpha: f64, beta: f64) -> DMatrix<f64> {
        soft_threshold(&(a - self.grad_g(a) * alpha), beta * alpha)
    }
}

pub fn grad_g(a: &DMatrix<f64>, q: &DMatrix<f64>, stats: &PooledStats, jitter: f64) -> Result<DMatrix<f64>> {
    Ok(TransitionObjective::new(q, stats, jitter)?.grad_g(a))
}

pub fn lipschitz_step(q: &DMatrix<f64>, stats: &PooledStats, jitter: f64) -> Result<f64> {
    TransitionObjective::new(q, stats, jitter)?.step_size()
}

pub fn f_objective(
    a: &DMatrix<f64>,
    q: &DMatrix<f64>,
    stats: &PooledStats,
    beta: f64,
    jitter: f64,
) -> Result<f64> {
    Ok(TransitionObjective::new(q, stats, jitter)?.f(a, beta))
}

#[derive(Clone, Debug)]
pub struct ProxOutcome {
    pub a: DMatrix<f64>,
    /// `f(A^(0)), f(A^(1)), ...`
    pub f_trace: Vec<f64>,
    pub step: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterate proximal gradient steps from `a0` until the relative Frobenius
/// change drops below `cfg.prox_tol` or `cfg.prox_max_iter` is reached.
#[allow(non_snake_case)]
pub fn prox_gradient_A(
    a0: &DMatrix<f64>,
    q: &DMatrix<f64>,
    stats: &PooledStats,
    beta: f64,
    cfg: &FitConfig,
) -> Result<ProxOutcome> {
    let obj = TransitionObjective::new(q, stats, cfg.jitter)?;
    run_prox(&obj, a0, beta, cfg.prox_max_iter, cfg.prox_tol)
}

pub(crate) fn run_prox(
    obj: &TransitionObjective,
    a0: &DMatrix<f64>,
    beta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ProxOutcome> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(SldsError::invalid("beta must be a finite nonnegative number"));
    }
    let step = obj.step_size()?;
    let mut cur = Iterate::new(obj, a0.clone());
    let mut f_trace = vec![cur.g + beta * l1_norm(&cur.a)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        let grad = &obj.q_inv * &cur.w - &obj.q_inv_cross;
        let next = Iterate::new(obj, soft_threshold(&(&cur.a - grad * step), beta * step));
        iterations += 1;
        let change = (&next.a - &cur.a).norm();
        let scale = cur.a.norm();
        cur = next;
        f_trace.push(cur.g + beta * l1_norm(&cur.a));
        if change <= tol * scale {
            converged = true;
            break;
        }
    }
    let a = cur.a;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SldsError::numerical("proximal iterations diverged"));
    }
    Ok(ProxOutcome { a, f_trace, step, iterations, converged })
}
