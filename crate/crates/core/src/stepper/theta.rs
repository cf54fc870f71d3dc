//! The angle sub-step: minimisation of
//!
//! `Phi(theta) = 1/2 (theta - theta_prev)^T A (theta - theta_prev) - <v, theta>_H
//!             + sum_c a_c gamma_eps(grad_c theta)`
//!
//! with `A = diag(W alpha0(T_M eta_prev)) / tau + nu^2 / tau * K` and cell
//! weights `a_c = vol * mean(alpha_M(eta_prev))`.
//!
//! Writing `a_c gamma_eps(y) = max_{|q| <= 1} a_c (q_0 eps + q' . y)` turns the
//! problem into a saddle point with one lifted dual vector `q_c` of length
//! `dim + 1` per cell. The primal solution is an affine function of the dual,
//! `theta(q) = theta_prev + A^{-1} (W v - B^T q)`, which the solvers exploit.

use crate::energy::singular_weights;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::linalg::{dot, BandCholesky, BandMatrix};
use crate::model::{gamma_eps, ModelConstants, TruncationBundle};

/// Iterative method for the dual of the angle sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThetaSolver {
    /// Accelerated projected gradient ascent on the dual with adaptive
    /// restart and backtracking on the Lipschitz constant.
    #[default]
    DualGradient,
    /// Chambolle–Pock primal-dual iteration in the metric of `A`.
    ChambollePock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaOptions {
    pub solver: ThetaSolver,
    /// Relative duality-gap target.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions {
            solver: ThetaSolver::DualGradient,
            tol: 1e-10,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThetaSolution {
    pub theta: Vec<f64>,
    pub dual: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub objective: f64,
}

const GAP_CHECK_EVERY: usize = 10;
const POWER_ITERATIONS: usize = 60;

/// Assembled angle sub-problem for one step.
#[derive(Debug, Clone)]
pub struct ThetaProblem<'g> {
    grid: &'g Grid,
    eps: f64,
    theta_prev: Vec<f64>,
    wv: Vec<f64>,
    a: BandMatrix,
    chol: BandCholesky,
    cell_weights: Vec<f64>,
}

impl<'g> ThetaProblem<'g> {
    pub fn new(
        grid: &'g Grid,
        eta_prev: &[f64],
        theta_prev: &[f64],
        v: &[f64],
        consts: &ModelConstants,
        bundle: &TruncationBundle,
    ) -> Result<Self> {
        let tau = consts.tau;
        let w = grid.node_weights();
        let diag: Vec<f64> = eta_prev
            .iter()
            .zip(w)
            .map(|(&e, &wn)| wn * bundle.alpha0_m(e) / tau)
            .collect();
        let a = BandMatrix::diag_plus_stiffness(grid, &diag, consts.nu * consts.nu / tau);
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::LinearSolve("angle system matrix is not positive definite".into()))?;
        Ok(ThetaProblem {
            grid,
            eps: consts.eps,
            theta_prev: theta_prev.to_vec(),
            wv: v.iter().zip(w).map(|(a, b)| a * b).collect(),
            a,
            chol,
            cell_weights: singular_weights(grid, eta_prev, bundle),
        })
    }

    fn lifted(&self) -> usize {
        self.grid.dim() + 1
    }

    pub fn dual_len(&self) -> usize {
        self.grid.cell_count() * self.lifted()
    }

    /// `Phi(theta)`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let w: Vec<f64> = theta.iter().zip(&self.theta_prev).map(|(a, b)| a - b).collect();
        let mut aw = vec![0.0; w.len()];
        self.a.apply(&w, &mut aw);
        0.5 * dot(&w, &aw) - dot(&self.wv, theta) + self.singular(theta)
    }

    fn singular(&self, theta: &[f64]) -> f64 {
        let d = self.grid.dim();
        let mut g = vec![0.0; self.grid.cell_count() * d];
        self.grid.grad_raw(theta, &mut g);
        g.chunks(d)
            .zip(&self.cell_weights)
            .map(|(y, a)| a * gamma_eps(self.eps, y))
            .sum()
    }

    /// Slack of the variational inequality tested with `psi`; nonnegative at
    /// the minimiser for every `psi`.
    pub fn inequality_slack(&self, theta: &[f64], psi: &[f64]) -> f64 {
        let w: Vec<f64> = theta.iter().zip(&self.theta_prev).map(|(a, b)| a - b).collect();
        let mut aw = vec![0.0; w.len()];
        self.a.apply(&w, &mut aw);
        let diff: Vec<f64> = theta.iter().zip(psi).map(|(a, b)| a - b).collect();
        self.singular(psi) - self.singular(theta) + dot(&self.wv, &diff) - dot(&aw, &diff)
    }

    /// `B theta`, with `(B theta)_c = a_c (0, grad_c theta)`.
    fn b_apply(&self, theta: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        let mut g = vec![0.0; self.grid.cell_count() * d];
        self.grid.grad_raw(theta, &mut g);
        for (c, a) in self.cell_weights.iter().enumerate() {
            out[c * (d + 1)] = 0.0;
            for k in 0..d {
                out[c * (d + 1) + 1 + k] = a * g[c * d + k];
            }
        }
    }

    fn bt_apply(&self, q: &[f64], out: &mut [f64]) {
        let d = self.grid.dim();
        let mut flux = vec![0.0; self.grid.cell_count() * d];
        for (c, a) in self.cell_weights.iter().enumerate() {
            for k in 0..d {
                flux[c * d + k] = a * q[c * (d + 1) + 1 + k];
            }
        }
        self.grid.grad_transpose_raw(&flux, out);
    }

    /// Linear part of the dual objective, `(a_c eps, 0)` per cell.
    fn offset(&self, c: usize) -> f64 {
        self.cell_weights[c] * self.eps
    }

    fn project(&self, q: &mut [f64]) {
        for block in q.chunks_mut(self.lifted()) {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1.0 {
                block.iter_mut().for_each(|v| *v /= n);
            }
        }
    }

    /// `theta(q) = theta_prev + A^{-1} (W v - B^T q)`.
    fn primal_of(&self, q: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.theta_prev.len()];
        self.bt_apply(q, &mut s);
        for (si, wv) in s.iter_mut().zip(&self.wv) {
            *si = wv - *si;
        }
        self.chol.solve_in_place(&mut s);
        s.iter_mut().zip(&self.theta_prev).for_each(|(x, p)| *x += p);
        s
    }

    /// Dual objective at `q`, given `theta = theta(q)`.
    fn dual_value(&self, q: &[f64], theta: &[f64]) -> f64 {
        let mut s = vec![0.0; theta.len()];
        self.bt_apply(q, &mut s);
        let mut val = 0.0;
        for i in 0..s.len() {
            let si = self.wv[i] - s[i];
            val += -0.5 * si * (theta[i] - self.theta_prev[i]) - si * self.theta_prev[i];
        }
        let l = self.lifted();
        val + (0..self.grid.cell_count()).map(|c| self.offset(c) * q[c * l]).sum::<f64>()
    }

    fn gap(&self, q: &[f64], theta: &[f64]) -> (f64, f64) {
        let phi = self.objective(theta);
        (phi - self.dual_value(q, theta), phi)
    }

    /// Rayleigh estimate of `lambda_max(B A^{-1} B^T)` by power iteration.
    fn operator_norm_sq(&self) -> f64 {
        let n = self.theta_prev.len();
        let mut x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666).fract() - 0.5).collect();
        let mut bx = vec![0.0; self.dual_len()];
        let mut best = 0.0f64;
        for _ in 0..POWER_ITERATIONS {
            self.b_apply(&x, &mut bx);
            let mut ax = vec![0.0; n];
            self.a.apply(&x, &mut ax);
            let den = dot(&x, &ax);
            if den <= 0.0 {
                break;
            }
            best = best.max(dot(&bx, &bx) / den);
            let mut y = vec![0.0; n];
            self.bt_apply(&bx, &mut y);
            self.chol.solve_in_place(&mut y);
            let norm = dot(&y, &y).sqrt();
            if norm == 0.0 {
                break;
            }
            x = y.into_iter().map(|v| v / norm).collect();
        }
        best
    }

    pub fn solve(&self, warm: Option<&[f64]>, opts: &ThetaOptions) -> Result<ThetaSolution> {
        let mut q = match warm {
            Some(w) if w.len() == self.dual_len() => w.to_vec(),
            _ => vec![0.0; self.dual_len()],
        };
        self.project(&mut q);
        if self.cell_weights.iter().all(|&a| a == 0.0) {
            let theta = self.primal_of(&q);
            let objective = self.objective(&theta);
            return Ok(ThetaSolution {
                theta,
                dual: q,
                iterations: 0,
                gap: 0.0,
                objective,
            });
        }
        match opts.solver {
            ThetaSolver::DualGradient => self.solve_dual_gradient(q, opts),
            ThetaSolver::ChambollePock => self.solve_chambolle_pock(q, opts),
        }
    }

    fn converged(&self, q: &[f64], theta: &[f64], tol: f64) -> (bool, f64, f64) {
        let (gap, phi) = self.gap(q, theta);
        (gap <= tol * (1.0 + phi.abs()), gap, phi)
    }

    fn solve_dual_gradient(&self, mut q: Vec<f64>, opts: &ThetaOptions) -> Result<ThetaSolution> {
        let m = self.dual_len();
        let mut lip = 1.05 * self.operator_norm_sq();
        if !(lip > 0.0) {
            lip = 1.0;
        }
        let mut theta_q = self.primal_of(&q);
        let (done, mut gap, mut phi) = self.converged(&q, &theta_q, opts.tol);
        if done {
            return Ok(ThetaSolution {
                theta: theta_q,
                dual: q,
                iterations: 0,
                gap,
                objective: phi,
            });
        }
        let mut y = q.clone();
        let mut theta_y = theta_q.clone();
        let mut t = 1.0f64;
        let mut grad = vec![0.0; m];
        let mut bd = vec![0.0; m];
        let l = self.lifted();
        for it in 1..=opts.max_iter {
            self.b_apply(&theta_y, &mut grad);
            for c in 0..self.grid.cell_count() {
                grad[c * l] += self.offset(c);
            }
            let (q_new, theta_new) = loop {
                let mut cand: Vec<f64> = y.iter().zip(&grad).map(|(y, g)| y + g / lip).collect();
                self.project(&mut cand);
                let th = self.primal_of(&cand);
                // The dual is quadratic, so the descent-lemma check reduces to
                // d^T B A^{-1} B^T d <= L |d|^2 with A^{-1} B^T d = theta_y - th.
                let d: Vec<f64> = cand.iter().zip(&y).map(|(a, b)| a - b).collect();
                let diff: Vec<f64> = theta_y.iter().zip(&th).map(|(a, b)| a - b).collect();
                self.b_apply(&diff, &mut bd);
                let curv = dot(&d, &bd);
                let dd = dot(&d, &d);
                if curv <= lip * dd * (1.0 + 1e-10) || dd == 0.0 {
                    break (cand, th);
                }
                lip *= 2.0;
            };
            if it % GAP_CHECK_EVERY == 0 {
                let (done, g, p) = self.converged(&q_new, &theta_new, opts.tol);
                gap = g;
                phi = p;
                if done {
                    return Ok(ThetaSolution {
                        theta: theta_new,
                        dual: q_new,
                        iterations: it,
                        gap,
                        objective: phi,
                    });
                }
            }
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let restart: f64 = (0..m).map(|i| (y[i] - q_new[i]) * (q_new[i] - q[i])).sum();
            if restart > 0.0 {
                t = 1.0;
                y.clone_from(&q_new);
                theta_y.clone_from(&theta_new);
            } else {
                let beta = (t - 1.0) / t_new;
                for i in 0..m {
                    y[i] = q_new[i] + beta * (q_new[i] - q[i]);
                }
                for i in 0..theta_y.len() {
                    theta_y[i] = theta_new[i] + beta * (theta_new[i] - theta_q[i]);
                }
                t = t_new;
            }
            q = q_new;
            theta_q = theta_new;
        }
        Err(Error::ThetaNotConverged {
            iterations: opts.max_iter,
            gap,
            target: opts.tol * (1.0 + phi.abs()),
        })
    }

    fn solve_chambolle_pock(&self, mut q: Vec<f64>, opts: &ThetaOptions) -> Result<ThetaSolution> {
        let m = self.dual_len();
        let lip = 1.1 * self.operator_norm_sq();
        let sigma = 1.0 / lip.sqrt();
        let step = 1.0 / lip.sqrt();
        let l = self.lifted();
        let mut theta = self.primal_of(&q);
        let mut theta_bar = theta.clone();
        let mut bt = vec![0.0; m];
        let (mut gap, mut phi) = (f64::INFINITY, 0.0);
        for it in 1..=opts.max_iter {
            self.b_apply(&theta_bar, &mut bt);
            for (c, block) in q.chunks_mut(l).enumerate() {
                block[0] += sigma * self.offset(c);
                for k in 1..l {
                    block[k] += sigma * bt[c * l + k];
                }
            }
            self.project(&mut q);
            // prox of the quadratic in the A-metric: a convex combination of
            // the previous iterate and the exact minimiser for fixed q
            let target = self.primal_of(&q);
            let next: Vec<f64> = theta
                .iter()
                .zip(&target)
                .map(|(old, tgt)| (old + step * tgt) / (1.0 + step))
                .collect();
            for i in 0..theta.len() {
                theta_bar[i] = 2.0 * next[i] - theta[i];
            }
            theta = next;
            if it % GAP_CHECK_EVERY == 0 {
                let (done, g, p) = self.converged(&q, &target, opts.tol);
                gap = g;
                phi = p;
                if done {
                    return Ok(ThetaSolution {
                        theta: target,
                        dual: q,
                        iterations: it,
                        gap,
                        objective: phi,
                    });
                }
            }
        }
        Err(Error::ThetaNotConverged {
            iterations: opts.max_iter,
            gap,
            target: opts.tol * (1.0 + phi.abs()),
        })
    }
}

/// Solves the angle sub-step from a cold start.
pub fn theta_step(
    eta_prev: &Field,
    theta_prev: &Field,
    v_i: &Field,
    consts: &ModelConstants,
    bundle: &TruncationBundle,
    opts: &ThetaOptions,
) -> Result<Field> {
    let grid = eta_prev.grid();
    if **theta_prev.grid() != **grid || **v_i.grid() != **grid {
        return Err(Error::GridMismatch);
    }
    let problem = ThetaProblem::new(grid, eta_prev.values(), theta_prev.values(), v_i.values(), consts, bundle)?;
    let sol = problem.solve(None, opts)?;
    Ok(Field::from_raw(grid.clone(), sol.theta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(eps: f64, tau: f64) -> (ModelConstants, TruncationBundle) {
        let (c, f) = preset("default").unwrap();
        let c = ModelConstants::new(c.mu, c.nu, eps, c.t_final, tau, c.delta_star).unwrap();
        (c, TruncationBundle::new(2.0, f).unwrap())
    }

    #[test]
    fn constant_angle_is_stationary() {
        let (c, b) = setup(0.0, 0.1);
        let g = Arc::new(Grid::new(1, &[1.0], &[8]).unwrap());
        let eta = Field::from_fn(g.clone(), |x| 1.0 + x[0]).unwrap();
        let th = Field::constant(g.clone(), 0.7);
        let out = theta_step(&eta, &th, &Field::zeros(g.clone()), &c, &b, &ThetaOptions::default()).unwrap();
        for v in out.values() {
            assert!((v - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mobility_keeps_previous_angle() {
        let (c, b) = setup(0.0, 0.1);
        let g = Arc::new(Grid::new(1, &[1.0], &[8]).unwrap());
        let th = Field::from_fn(g.clone(), |x| (3.0 * x[0]).sin()).unwrap();
        let out = theta_step(&Field::zeros(g.clone()), &th, &Field::zeros(g.clone()), &c, &b, &ThetaOptions::default())
            .unwrap();
        for (a, b) in out.values().iter().zip(th.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn random_case(rng: &mut ChaCha8Rng, g: &Grid) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = g.node_count();
        let eta = (0..n).map(|_| rng.gen_range(0.2..1.5)).collect();
        let th = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        (eta, th, v)
    }

    #[test]
    fn solvers_satisfy_variational_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (dim, cells) in [(1usize, vec![12usize]), (2, vec![4, 3])] {
            let lengths = vec![1.0; dim];
            let g = Grid::new(dim, &lengths, &cells).unwrap();
            for eps in [0.0, 0.05, 1.0] {
                let (c, b) = setup(eps, 0.05);
                let (eta, th, v) = random_case(&mut rng, &g);
                let p = ThetaProblem::new(&g, &eta, &th, &v, &c, &b).unwrap();
                for solver in [ThetaSolver::DualGradient, ThetaSolver::ChambollePock] {
                    let opts = ThetaOptions {
                        solver,
                        tol: 1e-12,
                        max_iter: 400_000,
                    };
                    let sol = p.solve(None, &opts).unwrap();
                    for _ in 0..50 {
                        let psi: Vec<f64> = sol.theta.iter().map(|t| t + rng.gen_range(-0.3..0.3)).collect();
                        assert!(p.inequality_slack(&sol.theta, &psi) >= -1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn warm_start_reaches_same_minimiser() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let g = Grid::new(1, &[1.0], &[16]).unwrap();
        let (c, b) = setup(0.01, 0.1);
        let (eta, th, v) = random_case(&mut rng, &g);
        let p = ThetaProblem::new(&g, &eta, &th, &v, &c, &b).unwrap();
        let opts = ThetaOptions {
            tol: 1e-13,
            ..Default::default()
        };
        let cold = p.solve(None, &opts).unwrap();
        let warm = p.solve(Some(&cold.dual), &opts).unwrap();
        assert!(warm.iterations <= 10);
        let d: Vec<f64> = cold.theta.iter().zip(&warm.theta).map(|(a, b)| a - b).collect();
        assert!(g.norm_v_sq_raw(&d).sqrt() < 1e-5);
    }
}
