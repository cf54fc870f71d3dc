//! The implicit time-stepping scheme: per step the angle is updated first
//! from the previous order parameter, then the order parameter from the new
//! angle.

mod eta;
mod theta;

pub use eta::{eta_step, EtaOptions, EtaProblem, EtaSolution};
pub use theta::{theta_step, ThetaOptions, ThetaProblem, ThetaSolution, ThetaSolver};

use std::sync::Arc;

use crate::energy::{ceil_index, check_step_inequality, eval_energy, floor_index, EnergyReport};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::{choose_truncation, Forcing, ForcingTerm, MaterialFunctions, ModelConstants, TruncationBundle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub tol_inner: f64,
    pub tol_energy: f64,
    pub tol_maxprin: f64,
    pub theta_max_iter: usize,
    pub cg_tol: f64,
    pub armijo_trials: usize,
    pub theta_solver: ThetaSolver,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            tol_inner: 1e-10,
            tol_energy: 1e-8,
            tol_maxprin: 1e-8,
            theta_max_iter: 50_000,
            cg_tol: 1e-12,
            armijo_trials: 30,
            theta_solver: ThetaSolver::DualGradient,
        }
    }
}

impl Tolerances {
    pub fn theta_options(&self) -> ThetaOptions {
        ThetaOptions {
            solver: self.theta_solver,
            tol: self.tol_inner,
            max_iter: self.theta_max_iter,
        }
    }

    pub fn eta_options(&self) -> EtaOptions {
        EtaOptions {
            tol: self.tol_inner,
            cg_tol: self.cg_tol,
            armijo_trials: self.armijo_trials,
            ..EtaOptions::default()
        }
    }
}

/// Everything a run needs: grid, constants, material functions with their
/// truncation, initial data, forcing and solver tolerances.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Arc<Grid>,
    pub constants: ModelConstants,
    pub bundle: TruncationBundle,
    pub eta0: Field,
    pub theta0: Field,
    pub forcing: Forcing,
    pub tolerances: Tolerances,
}

impl Problem {
    /// Chooses the truncation level from the initial data and the forcing
    /// bound and validates the material functions on `[-M, M]`.
    pub fn new(
        constants: ModelConstants,
        funcs: MaterialFunctions,
        eta0: Field,
        theta0: Field,
        forcing: Forcing,
    ) -> Result<Self> {
        let grid = eta0.grid().clone();
        if **theta0.grid() != *grid {
            return Err(Error::GridMismatch);
        }
        for term in [&forcing.u, &forcing.v] {
            if let ForcingTerm::Tabulated(values) = term {
                if values.len() != grid.node_count() {
                    return Err(Error::InvalidParameter(format!(
                        "tabulated forcing has {} values, grid has {} nodes",
                        values.len(),
                        grid.node_count()
                    )));
                }
            }
        }
        if !(forcing.u_inf_bound.is_finite() && forcing.u_inf_bound >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bound on |u| must be finite and non-negative, got {}",
                forcing.u_inf_bound
            )));
        }
        let bundle = choose_truncation(&eta0, forcing.u_inf_bound, &funcs)?;
        funcs.validate(bundle.m(), constants.delta_star)?;
        Ok(Problem {
            grid,
            constants,
            bundle,
            eta0,
            theta0,
            forcing,
            tolerances: Tolerances::default(),
        })
    }

    pub fn m(&self) -> f64 {
        self.bundle.m()
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.constants = self.constants.with_tau(tau)?;
        Ok(self)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self> {
        self.constants = self.constants.with_eps(eps)?;
        Ok(self)
    }

    /// Replaces the initial data and re-selects the truncation level.
    pub fn with_initial(self, eta0: Field, theta0: Field) -> Result<Self> {
        let funcs = self.bundle.functions().clone();
        let tol = self.tolerances;
        Ok(Problem::new(self.constants, funcs, eta0, theta0, self.forcing)?.with_tolerances(tol))
    }

    /// Uses the truncation level `m` instead of the selected one. The level
    /// must still satisfy the selection rule for this problem's data.
    pub fn with_truncation(mut self, m: f64) -> Result<Self> {
        let u = self.forcing.u_inf_bound;
        let funcs = self.bundle.functions();
        let ok = m >= self.eta0.inf_norm().max(u) && funcs.g.eval(m) >= u && funcs.g.eval(-m) <= -u;
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "truncation level {m} violates the selection rule"
            )));
        }
        funcs.validate(m, self.constants.delta_star)?;
        self.bundle = TruncationBundle::new(m, funcs.clone())?;
        Ok(self)
    }
}

/// Interval averages of the forcing, index-aligned with the steps.
#[derive(Debug, Clone)]
pub struct ForcingSamples {
    pub u: Vec<Field>,
    pub v: Vec<Field>,
}

const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

/// `z_0 = 0` and `z_i = 1/tau int_{t_{i-1}}^{t_i} z` for `i = 1..=n_steps`,
/// with the forcing extended by zero past `t_final`. Integrals use 3-point
/// Gauss–Legendre per interval.
pub fn discretize_forcing(
    forcing: &Forcing,
    grid: &Arc<Grid>,
    tau: f64,
    t_final: f64,
    n_steps: usize,
) -> Result<ForcingSamples> {
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    let positions: Vec<[f64; 2]> = (0..grid.node_count()).map(|n| grid.node_position(n)).collect();
    let dim = grid.dim();
    let sample = |term: &ForcingTerm, what: &'static str| -> Result<Vec<Field>> {
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(Field::zeros(grid.clone()));
        for i in 1..=n_steps {
            let a = (i - 1) as f64 * tau;
            let b = (i as f64 * tau).min(t_final);
            if term.is_zero() || b <= a {
                out.push(Field::zeros(grid.clone()));
                continue;
            }
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            let values = positions
                .iter()
                .enumerate()
                .map(|(n, x)| {
                    let s: f64 = GAUSS_NODES
                        .iter()
                        .zip(GAUSS_WEIGHTS)
                        .map(|(xi, w)| w * term.eval(mid + half * xi, n, &x[..dim]))
                        .sum();
                    s * half / tau
                })
                .collect::<Vec<f64>>();
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what, index });
            }
            out.push(Field::from_raw(grid.clone(), values));
        }
        Ok(out)
    };
    let u = sample(&forcing.u, "forcing u")?;
    let v = sample(&forcing.v, "forcing v")?;
    let bound = forcing.u_inf_bound;
    for ui in &u {
        if ui.inf_norm() > bound * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidParameter(format!(
                "sampled |u| = {} exceeds the declared bound {bound}",
                ui.inf_norm()
            )));
        }
    }
    Ok(ForcingSamples { u, v })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub theta_iterations: usize,
    pub theta_gap: f64,
    pub newton_iterations: usize,
    pub cg_iterations: usize,
    pub picard_iterations: usize,
    pub eta_residual: f64,
    pub hessian_positive: bool,
    /// `|eta|_inf <= M + tol_maxprin`.
    pub max_principle: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub index: usize,
    pub t: f64,
    pub eta: Field,
    pub theta: Field,
    pub diagnostics: StepDiagnostics,
}

/// Advances a problem one step at a time, carrying the dual warm start.
#[derive(Debug)]
pub struct Stepper<'p> {
    problem: &'p Problem,
    samples: ForcingSamples,
    dual: Option<Vec<f64>>,
}

impl<'p> Stepper<'p> {
    pub fn new(problem: &'p Problem) -> Result<Self> {
        let c = &problem.constants;
        let samples = discretize_forcing(&problem.forcing, &problem.grid, c.tau, c.t_final, c.step_count())?;
        Ok(Stepper {
            problem,
            samples,
            dual: None,
        })
    }

    pub fn samples(&self) -> &ForcingSamples {
        &self.samples
    }

    pub fn initial_state(&self) -> StepState {
        let p = self.problem;
        StepState {
            index: 0,
            t: 0.0,
            eta: p.eta0.clone(),
            theta: p.theta0.clone(),
            diagnostics: StepDiagnostics {
                hessian_positive: true,
                max_principle: p.eta0.inf_norm() <= p.m() + p.tolerances.tol_maxprin,
                ..Default::default()
            },
        }
    }

    pub fn advance(&mut self, state: &StepState) -> Result<(StepState, EnergyReport)> {
        let index = state.index + 1;
        self.step(state, index).map_err(|e| Error::StepFailed {
            index,
            source: Box::new(e),
        })
    }

    fn step(&mut self, state: &StepState, index: usize) -> Result<(StepState, EnergyReport)> {
        let p = self.problem;
        let grid = &*p.grid;
        let (u, v) = self
            .samples
            .u
            .get(index)
            .zip(self.samples.v.get(index))
            .ok_or_else(|| Error::InvalidParameter(format!("step {index} is past the final time")))?;
        let tp = ThetaProblem::new(
            grid,
            state.eta.values(),
            state.theta.values(),
            v.values(),
            &p.constants,
            &p.bundle,
        )?;
        let ts = tp.solve(self.dual.as_deref(), &p.tolerances.theta_options())?;
        let ep = EtaProblem::new(grid, state.eta.values(), &ts.theta, u.values(), &p.constants, &p.bundle);
        let es = ep.solve(&p.tolerances.eta_options())?;
        self.dual = Some(ts.dual);
        let eta = Field::new(p.grid.clone(), es.eta)?;
        let theta = Field::new(p.grid.clone(), ts.theta)?;
        let next = StepState {
            index,
            t: index as f64 * p.constants.tau,
            diagnostics: StepDiagnostics {
                theta_iterations: ts.iterations,
                theta_gap: ts.gap,
                newton_iterations: es.newton_iterations,
                cg_iterations: es.cg_iterations,
                picard_iterations: es.picard_iterations,
                eta_residual: es.residual,
                hessian_positive: es.hessian_positive,
                max_principle: eta.inf_norm() <= p.m() + p.tolerances.tol_maxprin,
            },
            eta,
            theta,
        };
        let report = check_step_inequality(
            state,
            &next,
            p.constants.tau,
            u,
            v,
            &p.constants,
            &p.bundle,
            p.tolerances.tol_energy,
        )?;
        Ok((next, report))
    }
}

/// Complete trajectory of a run with one energy report per step.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub grid: Arc<Grid>,
    pub constants: ModelConstants,
    pub m: f64,
    pub material: String,
    pub states: Vec<StepState>,
    pub reports: Vec<EnergyReport>,
    pub initial_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Piecewise constant, equal to `z_i` on `(t_{i-1}, t_i]`.
    Backward,
    /// Piecewise constant, equal to `z_{i-1}` on `[t_{i-1}, t_i)`.
    Forward,
    /// Piecewise linear through the nodes.
    Linear,
}

impl RunResult {
    pub fn tau(&self) -> f64 {
        self.constants.tau
    }

    pub fn t_final(&self) -> f64 {
        self.constants.t_final
    }

    pub fn final_state(&self) -> &StepState {
        self.states.last().expect("a run always holds its initial state")
    }

    /// `F(eta_i, theta_i)` for `i = 0..=n`.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.reports.iter().map(|r| r.f_curr))
            .collect()
    }

    pub fn interpolate(&self, kind: Interpolation, t: f64) -> Result<(Field, Field)> {
        let t_final = self.t_final();
        if !(t >= 0.0 && t <= t_final * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange { t, t_final });
        }
        let last = self.states.len() - 1;
        let tau = self.tau();
        let hi = ceil_index(t, tau).min(last);
        let lo = floor_index(t, tau).min(hi);
        let pick = |i: usize| (self.states[i].eta.clone(), self.states[i].theta.clone());
        match kind {
            Interpolation::Backward => Ok(pick(hi)),
            Interpolation::Forward => Ok(pick(lo)),
            Interpolation::Linear => {
                if hi == lo {
                    return Ok(pick(hi));
                }
                let s = ((t - lo as f64 * tau) / tau).clamp(0.0, 1.0);
                let (a, b) = (&self.states[lo], &self.states[hi]);
                let blend = |x: &Field, y: &Field| {
                    let vals = x.values().iter().zip(y.values()).map(|(p, q)| (1.0 - s) * p + s * q).collect();
                    Field::from_raw(x.grid().clone(), vals)
                };
                Ok((blend(&a.eta, &b.eta), blend(&a.theta, &b.theta)))
            }
        }
    }
}

/// Runs the scheme for `ceil(T / tau)` steps.
pub fn run(problem: &Problem) -> Result<RunResult> {
    let mut stepper = Stepper::new(problem)?;
    let first = stepper.initial_state();
    let initial_energy = eval_energy(problem.constants.eps, &first.eta, &first.theta, &problem.bundle)?;
    let n = problem.constants.step_count();
    let mut states = Vec::with_capacity(n + 1);
    let mut reports = Vec::with_capacity(n);
    states.push(first);
    for _ in 0..n {
        let (next, report) = stepper.advance(states.last().unwrap())?;
        states.push(next);
        reports.push(report);
    }
    Ok(RunResult {
        grid: problem.grid.clone(),
        constants: problem.constants,
        m: problem.m(),
        material: problem.bundle.functions().name.clone(),
        states,
        reports,
        initial_energy,
    })
}
