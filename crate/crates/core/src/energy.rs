//! Truncated KWC energy and the discrete energy-dissipation inequalities.

use crate::error::{Error, Result};
use crate::grid::{weighted_dot, Field, Grid};
use crate::model::{gamma_eps, ModelConstants, TruncationBundle};
use crate::stepper::{RunResult, StepState};

/// The three contributions to `F_eps^M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    /// `1/2 |grad eta|^2`
    pub gradient: f64,
    /// `int G_M(eta)`
    pub potential: f64,
    /// `int alpha_M(eta) gamma_eps(grad theta)`
    pub singular: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.gradient + self.potential + self.singular
    }
}

/// `gamma_eps` of the discrete gradient of `theta`, per cell.
pub fn cell_gamma(grid: &Grid, eps: f64, theta: &[f64]) -> Vec<f64> {
    let dim = grid.dim();
    let mut g = vec![0.0; grid.cell_count() * dim];
    grid.grad_raw(theta, &mut g);
    g.chunks(dim).map(|y| gamma_eps(eps, y)).collect()
}

/// Cell weights `vol * mean_corners(alpha_M(eta))` of the singular term.
pub fn singular_weights(grid: &Grid, eta: &[f64], bundle: &TruncationBundle) -> Vec<f64> {
    let alpha: Vec<f64> = eta.iter().map(|&e| bundle.alpha_m(e)).collect();
    let mut w = vec![0.0; grid.cell_count()];
    grid.cell_average(&alpha, &mut w);
    let vol = grid.cell_volume();
    w.iter_mut().for_each(|v| *v *= vol);
    w
}

pub fn energy_parts(eps: f64, eta: &Field, theta: &Field, bundle: &TruncationBundle) -> Result<EnergyParts> {
    let grid = eta.grid();
    if **grid != **theta.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(energy_parts_raw(grid, eps, eta.values(), theta.values(), bundle))
}

pub(crate) fn energy_parts_raw(
    grid: &Grid,
    eps: f64,
    eta: &[f64],
    theta: &[f64],
    bundle: &TruncationBundle,
) -> EnergyParts {
    let gradient = 0.5 * grid.grad_sq_raw(eta);
    let potential = grid
        .node_weights()
        .iter()
        .zip(eta)
        .map(|(w, &e)| w * bundle.big_g_m(e))
        .sum();
    let weights = singular_weights(grid, eta, bundle);
    let singular = weights
        .iter()
        .zip(cell_gamma(grid, eps, theta))
        .map(|(a, g)| a * g)
        .sum();
    EnergyParts {
        gradient,
        potential,
        singular,
    }
}

/// `F_eps^M(eta, theta)`.
pub fn eval_energy(eps: f64, eta: &Field, theta: &Field, bundle: &TruncationBundle) -> Result<f64> {
    Ok(energy_parts(eps, eta, theta, bundle)?.total())
}

/// Both sides of a discrete energy inequality over one step or a range of
/// steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub step_index: usize,
    pub t: f64,
    pub f_prev: f64,
    pub f_curr: f64,
    /// `C0 / tau * (|d eta|_V^2 + |d theta|_V^2)`, summed over steps.
    pub dissipation: f64,
    /// `tau/2 |u_i|_H^2 + tau/(2 delta_star) |v_i|_H^2`, summed over steps.
    pub forcing_rhs: f64,
    /// `f_prev + forcing_rhs - dissipation - f_curr`.
    pub slack: f64,
    /// Admissible negative slack.
    pub tolerance: f64,
}

impl EnergyReport {
    pub fn violated(&self) -> bool {
        self.slack < -self.tolerance
    }
}

/// Evaluates the per-step estimate between two consecutive states.
#[allow(clippy::too_many_arguments)]
pub fn check_step_inequality(
    prev: &StepState,
    curr: &StepState,
    tau: f64,
    u_i: &Field,
    v_i: &Field,
    consts: &ModelConstants,
    bundle: &TruncationBundle,
    tol_energy: f64,
) -> Result<EnergyReport> {
    let grid = prev.eta.grid().clone();
    for f in [&prev.theta, &curr.eta, &curr.theta, u_i, v_i] {
        if **f.grid() != *grid {
            return Err(Error::GridMismatch);
        }
    }
    let f_prev = eval_energy(consts.eps, &prev.eta, &prev.theta, bundle)?;
    let f_curr = eval_energy(consts.eps, &curr.eta, &curr.theta, bundle)?;
    let d_eta: Vec<f64> = diff(curr.eta.values(), prev.eta.values());
    let d_theta: Vec<f64> = diff(curr.theta.values(), prev.theta.values());
    let dissipation = consts.c0() / tau * (grid.norm_v_sq_raw(&d_eta) + grid.norm_v_sq_raw(&d_theta));
    let w = grid.node_weights();
    let forcing_rhs = 0.5 * tau * weighted_dot(w, u_i.values(), u_i.values())
        + 0.5 * tau / consts.delta_star * weighted_dot(w, v_i.values(), v_i.values());
    Ok(EnergyReport {
        step_index: curr.index,
        t: curr.t,
        f_prev,
        f_curr,
        dissipation,
        forcing_rhs,
        slack: f_prev + forcing_rhs - dissipation - f_curr,
        tolerance: tol_energy * (1.0 + f_prev.abs()),
    })
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Interval form of the inequality on `[s, t]`, telescoped from the per-step
/// reports of steps `floor(s/tau) + 1 ..= ceil(t/tau)`.
pub fn check_interval_inequality(run: &RunResult, s: f64, t: f64) -> Result<EnergyReport> {
    let t_final = run.t_final();
    for x in [s, t] {
        if !(x >= 0.0 && x <= t_final * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { t: x, t_final });
        }
    }
    if s > t {
        return Err(Error::InvalidParameter(format!("interval start {s} exceeds end {t}")));
    }
    let tau = run.tau();
    let first = floor_index(s, tau) + 1;
    let last = ceil_index(t, tau).min(run.reports.len());
    let f_at = |i: usize| run.reports.get(i.wrapping_sub(1)).map(|r| r.f_curr).unwrap_or(run.initial_energy);
    if s == t || first > last {
        let i = floor_index(s, tau).min(run.reports.len());
        let f = f_at(i);
        return Ok(EnergyReport {
            step_index: i,
            t,
            f_prev: f,
            f_curr: f,
            dissipation: 0.0,
            forcing_rhs: 0.0,
            slack: 0.0,
            tolerance: 0.0,
        });
    }
    let steps = &run.reports[first - 1..last];
    Ok(EnergyReport {
        step_index: last,
        t,
        f_prev: steps[0].f_prev,
        f_curr: steps[steps.len() - 1].f_curr,
        dissipation: steps.iter().map(|r| r.dissipation).sum(),
        forcing_rhs: steps.iter().map(|r| r.forcing_rhs).sum(),
        slack: steps.iter().map(|r| r.slack).sum(),
        tolerance: steps.iter().map(|r| r.tolerance).sum(),
    })
}

/// `floor(t / tau)` with grid-node snapping.
pub(crate) fn floor_index(t: f64, tau: f64) -> usize {
    let r = t / tau;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.floor() as usize
    }
}

/// `ceil(t / tau)` with grid-node snapping.
pub(crate) fn ceil_index(t: f64, tau: f64) -> usize {
    let r = t / tau;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.max(1.0) {
        n as usize
    } else {
        r.ceil() as usize
    }
}

/// Terms of the discrete summation-by-parts identity
/// `sum_i <z_i - z_{i-1}, z_i> = 1/2 (|z_n|^2 - |z_0|^2) + 1/2 sum_i |z_i - z_{i-1}|^2`
/// in the inner product weighted by `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummationByParts {
    pub lhs: f64,
    pub rhs: f64,
    /// `1/2 (|z_n|^2 - |z_0|^2)`, a lower bound for `lhs`.
    pub lower_bound: f64,
}

pub fn summation_by_parts(z: &[Vec<f64>], w: &[f64]) -> SummationByParts {
    let mut lhs = 0.0;
    let mut increments = 0.0;
    for pair in z.windows(2) {
        let d = diff(&pair[1], &pair[0]);
        lhs += weighted_dot(w, &d, &pair[1]);
        increments += weighted_dot(w, &d, &d);
    }
    let (first, last) = (&z[0], &z[z.len() - 1]);
    let lower_bound = 0.5 * (weighted_dot(w, last, last) - weighted_dot(w, first, first));
    SummationByParts {
        lhs,
        rhs: lower_bound + 0.5 * increments,
        lower_bound,
    }
}
