use crate::error::{Error, Result};
use crate::grid::Field;
use crate::stepper::{Problem, RunResult, Stepper, ThetaProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub index: usize,
    pub quantity: &'static str,
    /// Amount by which the bound is exceeded.
    pub excess: f64,
}

/// Per-step ranges of both unknowns against the bounds `|eta| <= M` and, for
/// runs without angle forcing, `|theta| <= |theta_0|_inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub m: f64,
    pub theta_bound: Option<f64>,
    /// `(min, max)` of `eta` per step.
    pub eta_range: Vec<(f64, f64)>,
    pub theta_range: Vec<(f64, f64)>,
    pub violations: Vec<BoundViolation>,
}

impl ComparisonReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Scans a run for violations of the order-parameter and angle bounds.
/// Pass `v_zero = true` when the angle forcing vanishes, which enables the
/// angle bound.
pub fn comparison_check(run: &RunResult, v_zero: bool, tol: f64) -> ComparisonReport {
    let theta_bound = v_zero.then(|| run.states[0].theta.inf_norm());
    let mut violations = Vec::new();
    let mut eta_range = Vec::with_capacity(run.states.len());
    let mut theta_range = Vec::with_capacity(run.states.len());
    for s in &run.states {
        let (emin, emax) = (s.eta.min(), s.eta.max());
        let (tmin, tmax) = (s.theta.min(), s.theta.max());
        let e = emax.max(-emin);
        if e > run.m + tol {
            violations.push(BoundViolation {
                index: s.index,
                quantity: "eta",
                excess: e - run.m,
            });
        }
        if let Some(b) = theta_bound {
            let t = tmax.max(-tmin);
            if t > b + tol {
                violations.push(BoundViolation {
                    index: s.index,
                    quantity: "theta",
                    excess: t - b,
                });
            }
        }
        eta_range.push((emin, emax));
        theta_range.push((tmin, tmax));
    }
    ComparisonReport {
        m: run.m,
        theta_bound,
        eta_range,
        theta_range,
        violations,
    }
}

/// Ordering of two angle paths driven by the same order-parameter path.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedThetaReport {
    /// `|[theta^1_i - theta^2_i]^+|_inf` per step.
    pub positive_part: Vec<f64>,
    /// The same quantity at step 0.
    pub initial: f64,
    /// `max_i positive_part[i] - initial`.
    pub growth: f64,
}

impl OrderedThetaReport {
    pub fn ordered(&self, tol: f64) -> bool {
        self.growth <= tol
    }
}

/// Advances two angle fields from `theta_lower` and `theta_upper` with the
/// order parameter frozen to the path of `run` (the angle step only sees the
/// previous order parameter) and records the positive part of their
/// difference.
pub fn ordered_theta_check(
    problem: &Problem,
    run: &RunResult,
    theta_lower: &Field,
    theta_upper: &Field,
) -> Result<OrderedThetaReport> {
    let grid = &problem.grid;
    if **theta_lower.grid() != **grid || **theta_upper.grid() != **grid || *run.grid != **grid {
        return Err(Error::GridMismatch);
    }
    let stepper = Stepper::new(problem)?;
    let samples = stepper.samples();
    let opts = problem.tolerances.theta_options();
    let positive = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).max(0.0)).fold(0.0, f64::max);
    let mut lower = theta_lower.values().to_vec();
    let mut upper = theta_upper.values().to_vec();
    let mut duals: [Option<Vec<f64>>; 2] = [None, None];
    let initial = positive(&lower, &upper);
    let mut positive_part = vec![initial];
    for i in 1..run.states.len().min(samples.v.len()) {
        let eta_prev = run.states[i - 1].eta.values();
        let v = samples.v[i].values();
        for (k, theta) in [&mut lower, &mut upper].into_iter().enumerate() {
            let tp = ThetaProblem::new(grid, eta_prev, theta, v, &problem.constants, &problem.bundle)?;
            let sol = tp.solve(duals[k].as_deref(), &opts)?;
            *theta = sol.theta;
            duals[k] = Some(sol.dual);
        }
        positive_part.push(positive(&lower, &upper));
    }
    let growth = positive_part.iter().copied().fold(f64::NEG_INFINITY, f64::max) - initial;
    Ok(OrderedThetaReport {
        positive_part,
        initial,
        growth,
    })
}
