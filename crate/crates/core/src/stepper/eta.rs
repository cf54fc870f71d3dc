//! The order-parameter sub-step. The unknown `eta` solves `R(eta) = 0` with
//!
//! `R = W (eta - eta_prev) / tau + W g_M(eta) + alpha_M'(eta) Gamma
//!      + K eta + mu^2 / tau K (eta - eta_prev) - W u`,
//!
//! where `Gamma_n` collects `vol * gamma_eps(grad_c theta) / 2^d` from the
//! cells around node `n`. Each component of `R` is the variational identity
//! tested with the nodal hat function, so `R . phi` is the residual against
//! any test field `phi`.

use crate::energy::cell_gamma;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linalg::{conjugate_gradient, BandMatrix, CgFailure};
use crate::model::{ModelConstants, TruncationBundle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaOptions {
    /// Relative residual target in the `H` norm.
    pub tol: f64,
    pub cg_tol: f64,
    pub max_newton: usize,
    pub max_picard: usize,
    pub armijo_trials: usize,
}

impl Default for EtaOptions {
    fn default() -> Self {
        EtaOptions {
            tol: 1e-10,
            cg_tol: 1e-12,
            max_newton: 100,
            max_picard: 2000,
            armijo_trials: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtaSolution {
    pub eta: Vec<f64>,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub picard_iterations: usize,
    /// Final `|R|_H`.
    pub residual: f64,
    /// Whether the Jacobian at the solution is positive definite, i.e. the
    /// solution is a strict local minimiser of the step functional.
    pub hessian_positive: bool,
}

/// Assembled order-parameter sub-problem for one step.
#[derive(Debug, Clone)]
pub struct EtaProblem<'g> {
    grid: &'g Grid,
    bundle: &'g TruncationBundle,
    tau: f64,
    mu2_tau: f64,
    eta_prev: Vec<f64>,
    u: Vec<f64>,
    gamma_nodal: Vec<f64>,
}

impl<'g> EtaProblem<'g> {
    pub fn new(
        grid: &'g Grid,
        eta_prev: &[f64],
        theta_curr: &[f64],
        u: &[f64],
        consts: &ModelConstants,
        bundle: &'g TruncationBundle,
    ) -> Self {
        let vol = grid.cell_volume();
        let cells: Vec<f64> = cell_gamma(grid, consts.eps, theta_curr).into_iter().map(|g| g * vol).collect();
        let mut gamma_nodal = vec![0.0; grid.node_count()];
        grid.cell_average_transpose(&cells, &mut gamma_nodal);
        EtaProblem {
            grid,
            bundle,
            tau: consts.tau,
            mu2_tau: consts.mu * consts.mu / consts.tau,
            eta_prev: eta_prev.to_vec(),
            u: u.to_vec(),
            gamma_nodal,
        }
    }

    pub fn residual(&self, eta: &[f64]) -> Vec<f64> {
        let n = eta.len();
        let combo: Vec<f64> = (0..n)
            .map(|i| eta[i] + self.mu2_tau * (eta[i] - self.eta_prev[i]))
            .collect();
        let mut r = vec![0.0; n];
        self.grid.stiffness_apply(&combo, &mut r);
        let w = self.grid.node_weights();
        for i in 0..n {
            let e = eta[i];
            r[i] += w[i] * ((e - self.eta_prev[i]) / self.tau + self.bundle.g_m(e) - self.u[i])
                + self.bundle.alpha_m_prime(e) * self.gamma_nodal[i];
        }
        r
    }

    /// `|R|_H`, the discrete dual norm `sqrt(sum R_n^2 / W_n)`.
    pub fn residual_norm(&self, r: &[f64]) -> f64 {
        r.iter()
            .zip(self.grid.node_weights())
            .map(|(r, w)| r * r / w)
            .sum::<f64>()
            .sqrt()
    }

    /// `|R . phi| / |phi|_V`.
    pub fn tested_residual(&self, eta: &[f64], phi: &[f64]) -> f64 {
        let r = self.residual(eta);
        let s: f64 = r.iter().zip(phi).map(|(a, b)| a * b).sum();
        s.abs() / self.grid.norm_v_sq_raw(phi).sqrt()
    }

    pub fn jacobian(&self, eta: &[f64]) -> BandMatrix {
        let w = self.grid.node_weights();
        let diag: Vec<f64> = (0..eta.len())
            .map(|i| {
                let e = eta[i];
                w[i] * (1.0 / self.tau + self.bundle.g_m_prime(e))
                    + self.bundle.alpha_m_second(e) * self.gamma_nodal[i]
            })
            .collect();
        BandMatrix::diag_plus_stiffness(self.grid, &diag, 1.0 + self.mu2_tau)
    }

    fn target(&self) -> f64 {
        let u_h = self.grid.norm_h_sq_raw(&self.u).sqrt();
        1.0 + u_h
    }

    pub fn solve(&self, opts: &EtaOptions) -> Result<EtaSolution> {
        let target = opts.tol * self.target();
        let mut eta = self.eta_prev.clone();
        let mut r = self.residual(&eta);
        let mut norm = self.residual_norm(&r);
        let mut cg_total = 0;
        let mut it = 0;
        while norm > target {
            if it == opts.max_newton {
                return Err(Error::NewtonStagnation {
                    iterations: it,
                    residual: norm,
                });
            }
            it += 1;
            let jac = self.jacobian(&eta);
            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let mut dir = vec![0.0; eta.len()];
            match conjugate_gradient(|x, y| jac.apply(x, y), &rhs, &mut dir, opts.cg_tol, 10 * eta.len() + 100) {
                Ok(stats) => cg_total += stats.iterations,
                Err(CgFailure::Indefinite) => return self.picard(eta, it, cg_total, opts),
                Err(CgFailure::MaxIterations(stats)) => {
                    return Err(Error::LinearSolve(format!(
                        "conjugate gradients stopped at relative residual {:.3e} after {} iterations",
                        stats.relative_residual, stats.iterations
                    )))
                }
            }
            let merit = norm * norm;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..opts.armijo_trials {
                let trial: Vec<f64> = eta.iter().zip(&dir).map(|(e, d)| e + step * d).collect();
                let tr = self.residual(&trial);
                let tn = self.residual_norm(&tr);
                if tn * tn <= (1.0 - 1e-4 * step) * merit {
                    eta = trial;
                    r = tr;
                    norm = tn;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // Rounding can stall the line search right at the target.
                if norm <= 10.0 * target {
                    break;
                }
                return Err(Error::NewtonStagnation {
                    iterations: it,
                    residual: norm,
                });
            }
        }
        Ok(self.finish(eta, it, cg_total, 0, norm))
    }

    /// Fixed-point iteration with `g` and `alpha'` lagged, used when the
    /// Newton matrix is indefinite.
    fn picard(&self, mut eta: Vec<f64>, newton: usize, cg: usize, opts: &EtaOptions) -> Result<EtaSolution> {
        let target = opts.tol * self.target();
        let w = self.grid.node_weights();
        let n = eta.len();
        let diag: Vec<f64> = w.iter().map(|w| w / self.tau).collect();
        let chol = BandMatrix::diag_plus_stiffness(self.grid, &diag, 1.0 + self.mu2_tau)
            .cholesky()
            .ok_or_else(|| Error::LinearSolve("fixed-point matrix is not positive definite".into()))?;
        let mut k_prev = vec![0.0; n];
        self.grid.stiffness_apply(&self.eta_prev, &mut k_prev);
        let mut norm = self.residual_norm(&self.residual(&eta));
        for k in 1..=opts.max_picard {
            let mut rhs: Vec<f64> = (0..n)
                .map(|i| {
                    let e = eta[i];
                    w[i] * (self.eta_prev[i] / self.tau - self.bundle.g_m(e) + self.u[i])
                        - self.bundle.alpha_m_prime(e) * self.gamma_nodal[i]
                        + self.mu2_tau * k_prev[i]
                })
                .collect();
            chol.solve_in_place(&mut rhs);
            eta = rhs;
            norm = self.residual_norm(&self.residual(&eta));
            if !norm.is_finite() {
                break;
            }
            if norm <= target {
                return Ok(self.finish(eta, newton, cg, k, norm));
            }
        }
        Err(Error::NewtonStagnation {
            iterations: newton + opts.max_picard,
            residual: norm,
        })
    }

    fn finish(&self, eta: Vec<f64>, newton: usize, cg: usize, picard: usize, residual: f64) -> EtaSolution {
        let hessian_positive = self.jacobian(&eta).cholesky().is_some();
        EtaSolution {
            eta,
            newton_iterations: newton,
            cg_iterations: cg,
            picard_iterations: picard,
            residual,
            hessian_positive,
        }
    }
}

/// Solves the order-parameter sub-step given the already updated angle.
pub fn eta_step(
    eta_prev: &Field,
    theta_curr: &Field,
    u_i: &Field,
    consts: &ModelConstants,
    bundle: &TruncationBundle,
    opts: &EtaOptions,
) -> Result<Field> {
    let grid = eta_prev.grid();
    if **theta_curr.grid() != **grid || **u_i.grid() != **grid {
        return Err(Error::GridMismatch);
    }
    let p = EtaProblem::new(grid, eta_prev.values(), theta_curr.values(), u_i.values(), consts, bundle);
    Ok(Field::from_raw(grid.clone(), p.solve(opts)?.eta))
}
