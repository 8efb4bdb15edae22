//! Projected Levenberg-Marquardt for small dense least-squares problems.
//!
//! Minimizes `0.5 * ||r(x)||^2` over a box-like feasible set given by a
//! projection. Damping follows Nielsen's update: a gain ratio above zero
//! accepts the step and shrinks the damping, otherwise the damping grows
//! geometrically.

use nalgebra::{DMatrix, DVector};

pub(crate) trait LeastSquares {
    fn residuals(&self, x: &[f64]) -> Vec<f64>;

    /// Jacobian at `x`, where `r` is `residuals(x)`.
    fn jacobian(&self, x: &[f64], r: &[f64]) -> DMatrix<f64>;

    /// Maps an arbitrary parameter vector onto the feasible set.
    fn project(&self, x: &mut [f64]);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmSettings {
    pub max_iterations: usize,
    pub residual_tolerance: f64,
    pub step_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Termination {
    Residual,
    Step,
    MaxIterations,
    /// Residuals or the Jacobian stopped being finite at the current point.
    NonFinite,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    pub initial_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl LmOutcome {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Residual | Termination::Step)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn minimize<P: LeastSquares>(problem: &P, x0: &[f64], cfg: LmSettings) -> LmOutcome {
    let n = x0.len();
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut r = problem.residuals(&x);
    let initial_norm = norm2(&r);
    let finish = |x: Vec<f64>, r: Vec<f64>, iterations, termination| LmOutcome {
        x,
        residuals: r,
        initial_norm,
        iterations,
        termination,
    };
    if !all_finite(&r) {
        return finish(x, r, 0, Termination::NonFinite);
    }
    if inf_norm(&r) <= cfg.residual_tolerance {
        return finish(x, r, 0, Termination::Residual);
    }

    let mut cost = 0.5 * norm2(&r).powi(2);
    let mut jac = problem.jacobian(&x, &r);
    if !jac.iter().all(|v| v.is_finite()) {
        return finish(x, r, 0, Termination::NonFinite);
    }
    let mut jtj = jac.transpose() * &jac;
    let mut jtr = jac.transpose() * DVector::from_column_slice(&r);
    let mut mu = 1e-3 * jtj.diagonal().amax().max(1e-12);
    let mut nu = 2.0;

    for iteration in 1..=cfg.max_iterations {
        let mut lhs = jtj.clone();
        for k in 0..n {
            lhs[(k, k)] += mu;
        }
        let step = match lhs.cholesky() {
            Some(ch) => ch.solve(&(-&jtr)),
            None => {
                mu *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let mut trial = x.clone();
        for k in 0..n {
            trial[k] += step[k];
        }
        problem.project(&mut trial);
        let actual: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let step_norm = norm2(&actual);
        if step_norm <= cfg.step_tolerance * (cfg.step_tolerance + norm2(&x)) {
            return finish(x, r, iteration, Termination::Step);
        }

        let r_trial = problem.residuals(&trial);
        let cost_trial = if all_finite(&r_trial) {
            0.5 * norm2(&r_trial).powi(2)
        } else {
            f64::INFINITY
        };
        let s = DVector::from_column_slice(&actual);
        let predicted = -(jtr.dot(&s)) - 0.5 * s.dot(&(&jtj * &s));
        let rho = if predicted > 0.0 {
            (cost - cost_trial) / predicted
        } else if cost_trial < cost {
            1.0
        } else {
            -1.0
        };

        if rho > 0.0 && cost_trial < cost {
            x = trial;
            r = r_trial;
            cost = cost_trial;
            if inf_norm(&r) <= cfg.residual_tolerance {
                return finish(x, r, iteration, Termination::Residual);
            }
            jac = problem.jacobian(&x, &r);
            if !jac.iter().all(|v| v.is_finite()) {
                return finish(x, r, iteration, Termination::NonFinite);
            }
            jtj = jac.transpose() * &jac;
            jtr = jac.transpose() * DVector::from_column_slice(&r);
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
        }
        if !mu.is_finite() {
            return finish(x, r, iteration, Termination::Step);
        }
    }
    finish(x, r, cfg.max_iterations, Termination::MaxIterations)
}

/// Forward-difference Jacobian, used where no structure is exploited.
#[cfg(test)]
pub(crate) fn forward_jacobian<P: LeastSquares>(problem: &P, x: &[f64], r: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(r.len(), x.len());
    for k in 0..x.len() {
        let h = 1e-7 * x[k].abs().max(1.0);
        let mut xp = x.to_vec();
        xp[k] += h;
        let rp = problem.residuals(&xp);
        for i in 0..r.len() {
            jac[(i, k)] = (rp[i] - r[i]) / h;
        }
    }
    jac
}
