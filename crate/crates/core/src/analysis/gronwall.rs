use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::choose_truncation_level;
use crate::stepper::{run, Problem, RunResult};
use std::sync::Arc;

const EMBEDDING_SAMPLES: usize = 200;

/// Twin-run stability data. The envelope uses a sampled embedding constant
/// in place of the continuous one, so it is a heuristic bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub delta: f64,
    pub times: Vec<f64>,
    /// `J(t_i)` for the pair of runs.
    pub j: Vec<f64>,
    pub envelope: Vec<f64>,
    pub c3: f64,
    pub embedding_constant: f64,
    /// The two runs agree bitwise.
    pub identical: bool,
}

impl StabilityReport {
    pub fn j0(&self) -> f64 {
        self.j[0]
    }

    /// Steps where `J` exceeds the envelope.
    pub fn crossings(&self) -> Vec<usize> {
        (0..self.j.len())
            .filter(|&i| self.j[i] > self.envelope[i] * (1.0 + 1e-9) + 1e-300)
            .collect()
    }

    pub fn envelope_respected(&self) -> bool {
        self.crossings().is_empty()
    }
}

/// Smooth Neumann mode `prod_k cos(pi x_k / L_k)` scaled to unit `V` norm.
pub fn perturbation_direction(grid: &Arc<Grid>) -> Result<Field> {
    let lengths = grid.lengths().to_vec();
    let f = Field::from_fn(grid.clone(), |x| {
        x.iter().zip(&lengths).map(|(xk, l)| (PI * xk / l).cos()).product()
    })?;
    let n = grid.norm_v(&f)?;
    Ok(f.map(|v| v / n))
}

/// Largest observed `|f|_{L^4}^2 / |f|_V^2` over constants, low cosine modes
/// and seeded random fields.
pub fn embedding_constant(grid: &Grid, seed: u64) -> f64 {
    let n = grid.node_count();
    let w = grid.node_weights();
    let ratio = |f: &[f64]| {
        let l4: f64 = w.iter().zip(f).map(|(w, v)| w * v.powi(4)).sum::<f64>().sqrt();
        let v = grid.norm_v_sq_raw(f);
        if v > 0.0 {
            l4 / v
        } else {
            0.0
        }
    };
    let mut best = ratio(&vec![1.0; n]);
    let pos: Vec<[f64; 2]> = (0..n).map(|i| grid.node_position(i)).collect();
    for k in 1..=4 {
        let f: Vec<f64> = pos
            .iter()
            .map(|x| (0..grid.dim()).map(|d| (k as f64 * PI * x[d] / grid.lengths()[d]).cos()).product())
            .collect();
        best = best.max(ratio(&f));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..EMBEDDING_SAMPLES {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        best = best.max(ratio(&f));
    }
    best
}

/// `J = |d eta|_H^2 + mu^2 |grad d eta|^2 + |sqrt(alpha0(eta^1)) d theta|_H^2
/// + nu^2 |grad d theta|^2`.
fn j_value(problem: &Problem, a: &RunResult, b: &RunResult, i: usize) -> f64 {
    let g = &problem.grid;
    let c = &problem.constants;
    let (s1, s2) = (&a.states[i], &b.states[i]);
    let de: Vec<f64> = s1.eta.values().iter().zip(s2.eta.values()).map(|(x, y)| x - y).collect();
    let dt: Vec<f64> = s1.theta.values().iter().zip(s2.theta.values()).map(|(x, y)| x - y).collect();
    let weighted: f64 = g
        .node_weights()
        .iter()
        .zip(s1.eta.values())
        .zip(&dt)
        .map(|((w, e), d)| w * problem.bundle.alpha0_m(*e) * d * d)
        .sum();
    g.norm_h_sq_raw(&de) + c.mu * c.mu * g.grad_sq_raw(&de) + weighted + c.nu * c.nu * g.grad_sq_raw(&dt)
}

/// Runs the problem and a copy with both initial fields shifted by `delta`
/// times [`perturbation_direction`], and compares `J(t_i)` with
/// `J(0) exp(C3 sum_k tau (|d_t eta^1_k|_H + |d_t theta^2_k|_V + 1))`.
pub fn gronwall_stability(problem: &Problem, delta: f64, seed: u64) -> Result<StabilityReport> {
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("perturbation size must be >= 0, got {delta}")));
    }
    let grid = &problem.grid;
    let dir = perturbation_direction(grid)?;
    let perturbed = problem
        .clone()
        .with_initial(problem.eta0.axpy(delta, &dir)?, problem.theta0.axpy(delta, &dir)?)?;
    let u = problem.forcing.u_inf_bound;
    let g = &problem.bundle.functions().g;
    let m = problem.m().max(choose_truncation_level(perturbed.eta0.inf_norm(), u, g)?.m);
    let first = problem.clone().with_truncation(m)?;
    let second = perturbed.with_truncation(m)?;
    let (a, b) = rayon::join(|| run(&first), || run(&second));
    let (a, b) = (a?, b?);

    let lip = first.bundle.lipschitz();
    let emb = embedding_constant(grid, seed);
    let c = &problem.constants;
    let c3 = 2.0 * (lip.alpha + lip.g + emb * lip.alpha0) / 1f64.min(c.delta_star).min(c.nu * c.nu);
    let tau = c.tau;
    let mut j = Vec::with_capacity(a.states.len());
    let mut envelope = Vec::with_capacity(a.states.len());
    let mut times = Vec::with_capacity(a.states.len());
    let mut integral = 0.0;
    for i in 0..a.states.len() {
        if i > 0 {
            let de: Vec<f64> = diff(a.states[i].eta.values(), a.states[i - 1].eta.values());
            let dt: Vec<f64> = diff(b.states[i].theta.values(), b.states[i - 1].theta.values());
            integral += tau * (grid.norm_h_sq_raw(&de).sqrt() / tau + grid.norm_v_sq_raw(&dt).sqrt() / tau + 1.0);
        }
        times.push(a.states[i].t);
        j.push(j_value(&first, &a, &b, i));
        envelope.push(j[0] * (c3 * integral).exp());
    }
    let identical = a.states.iter().zip(&b.states).all(|(x, y)| x.eta == y.eta && x.theta == y.theta);
    Ok(StabilityReport {
        delta,
        times,
        j,
        envelope,
        c3,
        embedding_constant: emb,
        identical,
    })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
