//! Brute-force reference solver for the angle sub-step on tiny grids, and
//! randomized suites comparing it and the order-parameter solver against
//! independent checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{gamma_eps, preset, ModelConstants, TruncationBundle};
use crate::stepper::{EtaOptions, EtaProblem, ThetaOptions, ThetaProblem};

pub const ORACLE_MAX_NODES: usize = 12;
const ORACLE_MAX_ITER: usize = 1_000_000;
const ORACLE_STARTS: usize = 3;

/// Dense form of the angle objective, assembled entry by entry.
struct DenseTheta {
    n: usize,
    dim: usize,
    eps: f64,
    theta_prev: Vec<f64>,
    wv: Vec<f64>,
    a: Vec<Vec<f64>>,
    a_inv: Vec<Vec<f64>>,
    /// rows `c * dim + k`: gradient component `k` on cell `c`
    d: Vec<Vec<f64>>,
    cell_weight: Vec<f64>,
}

impl DenseTheta {
    fn new(
        grid: &Grid,
        eta_prev: &[f64],
        theta_prev: &[f64],
        v: &[f64],
        consts: &ModelConstants,
        bundle: &TruncationBundle,
    ) -> Result<Self> {
        let n = grid.node_count();
        let dim = grid.dim();
        let cells = grid.cell_count();
        let vol = grid.cell_volume();
        let mut d = vec![vec![0.0; n]; cells * dim];
        let mut col = vec![0.0; cells * dim];
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            grid.grad_raw(&e, &mut col);
            for (r, val) in col.iter().enumerate() {
                d[r][j] = *val;
            }
        }
        let w = grid.node_weights();
        let nu2 = consts.nu * consts.nu / consts.tau;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] += w[i] * bundle.alpha0_m(eta_prev[i]) / consts.tau;
            for j in 0..n {
                a[i][j] += nu2 * vol * d.iter().map(|row| row[i] * row[j]).sum::<f64>();
            }
        }
        let corners = grid.corners_per_cell();
        let cell_weight = (0..cells)
            .map(|c| {
                let nodes = grid.cell_nodes(c);
                vol * nodes[..corners].iter().map(|&k| bundle.alpha_m(eta_prev[k])).sum::<f64>() / corners as f64
            })
            .collect();
        let a_inv = invert(&a).ok_or_else(|| Error::LinearSolve("dense angle matrix is singular".into()))?;
        Ok(DenseTheta {
            n,
            dim,
            eps: consts.eps,
            theta_prev: theta_prev.to_vec(),
            wv: v.iter().zip(w).map(|(a, b)| a * b).collect(),
            a,
            a_inv,
            d,
            cell_weight,
        })
    }

    fn objective(&self, theta: &[f64]) -> f64 {
        let w: Vec<f64> = (0..self.n).map(|i| theta[i] - self.theta_prev[i]).collect();
        let mut quad = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                quad += w[i] * self.a[i][j] * w[j];
            }
        }
        let lin: f64 = (0..self.n).map(|i| self.wv[i] * theta[i]).sum();
        let mut sing = 0.0;
        for (c, a) in self.cell_weight.iter().enumerate() {
            let y: Vec<f64> = (0..self.dim)
                .map(|k| (0..self.n).map(|j| self.d[c * self.dim + k][j] * theta[j]).sum())
                .collect();
            sing += a * gamma_eps(self.eps, &y);
        }
        0.5 * quad - lin + sing
    }

    fn dual_len(&self) -> usize {
        self.cell_weight.len() * (self.dim + 1)
    }

    fn bt(&self, q: &[f64]) -> Vec<f64> {
        let l = self.dim + 1;
        (0..self.n)
            .map(|j| {
                let mut s = 0.0;
                for (c, a) in self.cell_weight.iter().enumerate() {
                    for k in 0..self.dim {
                        s += a * self.d[c * self.dim + k][j] * q[c * l + 1 + k];
                    }
                }
                s
            })
            .collect()
    }

    fn b(&self, theta: &[f64]) -> Vec<f64> {
        let l = self.dim + 1;
        let mut out = vec![0.0; self.dual_len()];
        for (c, a) in self.cell_weight.iter().enumerate() {
            for k in 0..self.dim {
                out[c * l + 1 + k] = a * (0..self.n).map(|j| self.d[c * self.dim + k][j] * theta[j]).sum::<f64>();
            }
        }
        out
    }

    fn primal(&self, q: &[f64]) -> Vec<f64> {
        let bt = self.bt(q);
        let s: Vec<f64> = (0..self.n).map(|i| self.wv[i] - bt[i]).collect();
        (0..self.n)
            .map(|i| self.theta_prev[i] + (0..self.n).map(|j| self.a_inv[i][j] * s[j]).sum::<f64>())
            .collect()
    }

    fn dual(&self, q: &[f64]) -> f64 {
        let bt = self.bt(q);
        let s: Vec<f64> = (0..self.n).map(|i| self.wv[i] - bt[i]).collect();
        let mut quad = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                quad += s[i] * self.a_inv[i][j] * s[j];
            }
        }
        let l = self.dim + 1;
        let lin: f64 = self.cell_weight.iter().enumerate().map(|(c, a)| a * self.eps * q[c * l]).sum();
        -0.5 * quad - (0..self.n).map(|i| s[i] * self.theta_prev[i]).sum::<f64>() + lin
    }

    /// Frobenius norm of `B A^{-1} B^T`, an upper bound of its spectral norm.
    fn lipschitz_bound(&self) -> f64 {
        let m = self.dual_len();
        let mut fro = 0.0;
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            let bt = self.bt(&e);
            let z: Vec<f64> = (0..self.n)
                .map(|i| (0..self.n).map(|k| self.a_inv[i][k] * bt[k]).sum())
                .collect();
            fro += self.b(&z).iter().map(|v| v * v).sum::<f64>();
        }
        fro.sqrt()
    }

    fn project(&self, q: &mut [f64]) {
        for block in q.chunks_mut(self.dim + 1) {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1.0 {
                block.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        m[col].iter_mut().for_each(|v| *v /= p);
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[col][k];
                    }
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Minimises the angle objective by projected gradient ascent on its dual
/// with the constant step `1/L`, `L` the Frobenius bound of the dual
/// Hessian, from three starts (zero and two random feasible points). Returns
/// the primal point with the lowest objective.
#[allow(clippy::too_many_arguments)]
pub fn theta_step_oracle(
    eta_prev: &Field,
    theta_prev: &Field,
    v_i: &Field,
    consts: &ModelConstants,
    bundle: &TruncationBundle,
    seed: u64,
) -> Result<Field> {
    let grid = eta_prev.grid();
    if grid.node_count() > ORACLE_MAX_NODES {
        return Err(Error::InvalidParameter(format!(
            "oracle supports at most {ORACLE_MAX_NODES} nodes, grid has {}",
            grid.node_count()
        )));
    }
    let dense = DenseTheta::new(grid, eta_prev.values(), theta_prev.values(), v_i.values(), consts, bundle)?;
    let m = dense.dual_len();
    let lip = dense.lipschitz_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..ORACLE_STARTS {
        let mut q: Vec<f64> = if start == 0 {
            vec![0.0; m]
        } else {
            (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        dense.project(&mut q);
        let mut theta = dense.primal(&q);
        if lip > 0.0 {
            for it in 1..=ORACLE_MAX_ITER {
                let mut grad = dense.b(&theta);
                let l = dense.dim + 1;
                for (c, a) in dense.cell_weight.iter().enumerate() {
                    grad[c * l] += a * dense.eps;
                }
                for (qi, g) in q.iter_mut().zip(&grad) {
                    *qi += g / lip;
                }
                dense.project(&mut q);
                theta = dense.primal(&q);
                if it % 100 == 0 {
                    let phi = dense.objective(&theta);
                    if phi - dense.dual(&q) <= 1e-15 * (1.0 + phi.abs()) {
                        break;
                    }
                }
            }
        }
        let phi = dense.objective(&theta);
        if best.as_ref().map_or(true, |(b, _)| phi < *b) {
            best = Some((phi, theta));
        }
    }
    let (_, theta) = best.expect("at least one start");
    Field::new(grid.clone(), theta)
}

/// Comparison of the main angle solver and the oracle on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleCase {
    pub eps: f64,
    pub tau: f64,
    /// `|theta_main - theta_oracle|_V`
    pub v_distance: f64,
    /// `Phi(theta_main) - Phi(theta_oracle)`
    pub objective_gap: f64,
}

impl OracleCase {
    pub fn within(&self, v_tol: f64, obj_tol: f64) -> bool {
        self.v_distance <= v_tol && self.objective_gap.abs() <= obj_tol
    }
}

/// Random tiny instances of the angle step (1D, 4 cells, default material)
/// with `eps` cycling through `eps_values`.
pub fn oracle_suite(instances: usize, eps_values: &[f64], seed: u64) -> Result<Vec<OracleCase>> {
    let (base, funcs) = preset("default")?;
    let bundle = TruncationBundle::new(2.0, funcs)?;
    let grid = Arc::new(Grid::new(1, &[1.0], &[4])?);
    let n = grid.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(instances);
    for k in 0..instances {
        let eps = eps_values[k % eps_values.len()];
        let tau = rng.gen_range(0.05..0.5);
        let consts = ModelConstants::new(base.mu, base.nu, eps, 1.0, tau, base.delta_star)?;
        let mut field = |lo: f64, hi: f64| Field::new(grid.clone(), (0..n).map(|_| rng.gen_range(lo..hi)).collect());
        let eta = field(-1.5, 1.5)?;
        let theta = field(-1.0, 1.0)?;
        let v = field(-1.0, 1.0)?;
        let problem = ThetaProblem::new(&grid, eta.values(), theta.values(), v.values(), &consts, &bundle)?;
        let opts = ThetaOptions {
            tol: 1e-15,
            max_iter: 1_000_000,
            ..Default::default()
        };
        let main = problem.solve(None, &opts)?;
        let oracle = theta_step_oracle(&eta, &theta, &v, &consts, &bundle, seed ^ k as u64)?;
        let diff: Vec<f64> = main.theta.iter().zip(oracle.values()).map(|(a, b)| a - b).collect();
        out.push(OracleCase {
            eps,
            tau,
            v_distance: grid.norm_v_sq_raw(&diff).sqrt(),
            objective_gap: problem.objective(&main.theta) - problem.objective(oracle.values()),
        });
    }
    Ok(out)
}

/// Residual check of the order-parameter step on one random instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaCase {
    /// `max |R(eta) . phi| / |phi|_V` over the random test fields.
    pub max_tested_residual: f64,
    pub hessian_positive: bool,
}

/// Random order-parameter steps on small 1D and 2D grids, each tested with
/// `tests` random fields.
pub fn eta_suite(instances: usize, tests: usize, seed: u64) -> Result<Vec<EtaCase>> {
    let (base, funcs) = preset("default")?;
    let bundle = TruncationBundle::new(2.0, funcs)?;
    let grids = [Grid::new(1, &[1.0], &[12])?, Grid::new(2, &[1.0, 1.0], &[4, 3])?];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(instances);
    for k in 0..instances {
        let grid = &grids[k % grids.len()];
        let n = grid.node_count();
        let eps = [0.0, 0.1, 1.0][k % 3];
        let tau = rng.gen_range(0.005..0.1);
        let consts = ModelConstants::new(base.mu, base.nu, eps, 1.0, tau, base.delta_star)?;
        let mut sample = |lo: f64, hi: f64| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
        let eta = sample(-1.5, 1.5);
        let theta = sample(-1.0, 1.0);
        let u = sample(-0.5, 0.5);
        let problem = EtaProblem::new(grid, &eta, &theta, &u, &consts, &bundle);
        let sol = problem.solve(&EtaOptions::default())?;
        let max_tested_residual = (0..tests)
            .map(|_| problem.tested_residual(&sol.eta, &sample(-1.0, 1.0)))
            .fold(0.0, f64::max);
        out.push(EtaCase {
            max_tested_residual,
            hessian_positive: sol.hessian_positive,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_inverse() {
        let a = vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]];
        let inv = invert(&a).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn oracle_keeps_constant_angle() {
        let (c, f) = preset("default").unwrap();
        let b = TruncationBundle::new(2.0, f).unwrap();
        let g = Arc::new(Grid::new(1, &[1.0], &[4]).unwrap());
        let eta = Field::from_fn(g.clone(), |x| 0.5 + x[0]).unwrap();
        let th = Field::constant(g.clone(), -0.4);
        let out = theta_step_oracle(&eta, &th, &Field::zeros(g.clone()), &c, &b, 1).unwrap();
        assert!(out.values().iter().all(|v| (v + 0.4).abs() < 1e-12));
    }

    #[test]
    fn small_oracle_suite_agrees() {
        for case in oracle_suite(6, &[0.0, 0.01, 1.0], 3).unwrap() {
            assert!(case.within(1e-6, 1e-9), "{case:?}");
        }
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let (c, f) = preset("default").unwrap();
        let b = TruncationBundle::new(2.0, f).unwrap();
        let g = Arc::new(Grid::new(1, &[1.0], &[20]).unwrap());
        let z = Field::zeros(g);
        assert!(theta_step_oracle(&z, &z, &z, &c, &b, 0).is_err());
    }
}
