use rayon::prelude::*;

use super::{fact_star, strictly_decreasing_or_zero, StudyKind, StudyReport, Verdict};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::model::choose_truncation_level;
use crate::stepper::{run, Interpolation, Problem, RunResult};

fn check_ladder(ladder: &[f64], what: &str) -> Result<()> {
    if ladder.len() < 2 {
        return Err(Error::InvalidParameter(format!("{what} ladder needs at least two rungs")));
    }
    let inc = ladder.windows(2).all(|w| w[1] > w[0]);
    let dec = ladder.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(Error::InvalidParameter(format!("{what} ladder must be strictly monotone")));
    }
    Ok(())
}

/// Node times of both runs in `[0, T]`, merged and sorted.
fn merged_times(a: &RunResult, b: &RunResult) -> Vec<f64> {
    let t_final = a.t_final().min(b.t_final());
    let mut ts: Vec<f64> = a
        .states
        .iter()
        .chain(&b.states)
        .map(|s| s.t)
        .filter(|&t| t < t_final)
        .chain(std::iter::once(t_final))
        .collect();
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (1.0 + y.abs()));
    ts
}

/// `sup_t |eta_a(t) - eta_b(t)|_H` and the same for `theta`, for the
/// piecewise-linear interpolants. The distance of two piecewise-linear paths
/// is convex between merged breakpoints, so the supremum over the
/// breakpoints is exact.
pub fn time_sup_distance_h(a: &RunResult, b: &RunResult) -> Result<(f64, f64)> {
    let grid = &a.grid;
    let mut best = (0.0f64, 0.0f64);
    for t in merged_times(a, b) {
        let (ea, ta) = a.interpolate(Interpolation::Linear, t)?;
        let (eb, tb) = b.interpolate(Interpolation::Linear, t)?;
        best.0 = best.0.max(grid.norm_h(&ea.sub(&eb)?)?);
        best.1 = best.1.max(grid.norm_h(&ta.sub(&tb)?)?);
    }
    Ok(best)
}

fn rate(d0: f64, d1: f64, h0: f64, h1: f64) -> f64 {
    if d0 > 0.0 && d1 > 0.0 {
        (d0 / d1).ln() / (h0 / h1).ln()
    } else {
        f64::NAN
    }
}

/// Runs the problem for every time step of `ladder` and compares
/// consecutive rungs in `C([0,T]; H)`.
pub fn tau_refinement_study(problem: &Problem, ladder: &[f64]) -> Result<StudyReport> {
    check_ladder(ladder, "tau")?;
    let problems = ladder
        .iter()
        .map(|&tau| problem.clone().with_tau(tau))
        .collect::<Result<Vec<_>>>()?;
    let runs = problems.par_iter().map(run).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(ladder.len() - 1);
    let mut eta_d = Vec::new();
    let mut theta_d = Vec::new();
    for k in 0..ladder.len() - 1 {
        let (de, dt) = time_sup_distance_h(&runs[k], &runs[k + 1])?;
        let (re, rt) = if k == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (
                rate(eta_d[k - 1], de, ladder[k - 1], ladder[k]),
                rate(theta_d[k - 1], dt, ladder[k - 1], ladder[k]),
            )
        };
        eta_d.push(de);
        theta_d.push(dt);
        let r = &runs[k];
        let dissipation: f64 = r.reports.iter().map(|x| x.dissipation).sum();
        let forcing: f64 = r.reports.iter().map(|x| x.forcing_rhs).sum();
        let final_energy = r.energies().last().copied().unwrap_or(r.initial_energy);
        rows.push(vec![
            ladder[k],
            ladder[k + 1],
            de,
            dt,
            re,
            rt,
            dissipation,
            final_energy,
            r.initial_energy + forcing,
        ]);
    }
    // dissipation plus final energy never exceed initial energy plus forcing
    let bounded = runs.iter().all(|r| {
        let lhs: f64 = r.reports.iter().map(|x| x.dissipation).sum::<f64>() + r.energies().last().unwrap();
        let rhs: f64 = r.initial_energy + r.reports.iter().map(|x| x.forcing_rhs).sum::<f64>();
        let tol: f64 = r.reports.iter().map(|x| x.tolerance).sum();
        lhs <= rhs + tol
    });
    let finals: Vec<f64> = runs.iter().map(|r| *r.energies().last().unwrap()).collect();
    let diss: Vec<f64> = runs
        .iter()
        .map(|r| r.reports.iter().map(|x| x.dissipation).sum())
        .collect();
    let n = runs.len();
    let tol = (finals[n - 1] - finals[n - 2]).abs() + (diss[n - 1] - diss[n - 2]).abs() + 1e-12;
    let split = fact_star(&finals, &diss, finals[n - 1], diss[n - 1], tol);
    Ok(StudyReport {
        kind: StudyKind::TauRefinement,
        ladder: ladder.to_vec(),
        columns: [
            "tau",
            "tau_next",
            "eta_sup_h",
            "theta_sup_h",
            "eta_rate",
            "theta_rate",
            "dissipation",
            "final_energy",
            "energy_bound",
        ]
        .map(String::from)
        .to_vec(),
        rows,
        verdicts: vec![
            Verdict {
                name: "eta_decreasing".into(),
                passed: strictly_decreasing_or_zero(&eta_d, 1e-14),
            },
            Verdict {
                name: "theta_decreasing".into(),
                passed: strictly_decreasing_or_zero(&theta_d, 1e-14),
            },
            Verdict {
                name: "dissipation_bounded".into(),
                passed: bounded,
            },
            Verdict {
                name: "energy_split_converges".into(),
                passed: split.a_converges && split.b_converges,
            },
        ],
    })
}

/// `eps + 2^{-n}` for `n = 1..=rungs`.
pub fn eps_ladder(eps: f64, rungs: usize) -> Vec<f64> {
    (1..=rungs).map(|n| eps + 0.5f64.powi(n as i32)).collect()
}

/// Directions of the initial-data perturbation; rung `n` adds
/// `2^{-n} (eta, theta)` to the base initial data.
#[derive(Debug, Clone)]
pub struct EpsPerturbation {
    pub eta: Field,
    pub theta: Field,
}

/// Sample times `0, T/4, T/2, 3T/4, T`.
fn quarter_times(t_final: f64) -> [f64; 5] {
    [0.0, 0.25, 0.5, 0.75, 1.0].map(|s| s * t_final)
}

/// Runs the base problem and one problem per `eps` rung (optionally with
/// perturbed initial data), all with a common truncation level, and reports
/// `V` distances to the base run at five sample times.
pub fn eps_continuity_study(
    problem: &Problem,
    ladder: &[f64],
    perturbation: Option<&EpsPerturbation>,
) -> Result<StudyReport> {
    check_ladder(ladder, "eps")?;
    let mut rungs = Vec::with_capacity(ladder.len());
    for (k, &eps) in ladder.iter().enumerate() {
        let mut p = problem.clone().with_eps(eps)?;
        if let Some(d) = perturbation {
            let s = 0.5f64.powi(k as i32 + 1);
            p = p.with_initial(problem.eta0.axpy(s, &d.eta)?, problem.theta0.axpy(s, &d.theta)?)?;
        }
        rungs.push(p);
    }
    let g = &problem.bundle.functions().g;
    let u = problem.forcing.u_inf_bound;
    let mut m = problem.m();
    for p in &rungs {
        m = m.max(choose_truncation_level(p.eta0.inf_norm(), u, g)?.m);
    }
    let base = problem.clone().with_truncation(m)?;
    let rungs = rungs
        .into_iter()
        .map(|p| p.with_truncation(m))
        .collect::<Result<Vec<_>>>()?;
    let (base_run, runs) = rayon::join(|| run(&base), || rungs.par_iter().map(run).collect::<Result<Vec<_>>>());
    let (base_run, runs) = (base_run?, runs?);
    let grid = &problem.grid;
    let times = quarter_times(problem.constants.t_final);
    let v_zero = problem.forcing.v.is_zero();
    let mut rows = Vec::with_capacity(ladder.len());
    let mut at_final = Vec::with_capacity(ladder.len());
    let mut theta_ok = true;
    for (k, r) in runs.iter().enumerate() {
        let mut row = vec![(k + 1) as f64, ladder[k]];
        for &t in &times {
            let (e0, t0) = base_run.interpolate(Interpolation::Linear, t)?;
            let (e1, t1) = r.interpolate(Interpolation::Linear, t)?;
            let d = (grid.norm_v(&e1.sub(&e0)?)?.powi(2) + grid.norm_v(&t1.sub(&t0)?)?.powi(2)).sqrt();
            row.push(d);
        }
        at_final.push(*row.last().unwrap());
        let theta_sup = r.states.iter().map(|s| s.theta.inf_norm()).fold(0.0, f64::max);
        let theta0_sup = r.states[0].theta.inf_norm();
        if v_zero && theta_sup > theta0_sup + 1e-8 {
            theta_ok = false;
        }
        row.push(theta_sup);
        row.push(theta0_sup);
        rows.push(row);
    }
    let mut verdicts = vec![Verdict {
        name: "distance_at_final_time_decreasing".into(),
        passed: strictly_decreasing_or_zero(&at_final, 1e-14),
    }];
    if v_zero {
        verdicts.push(Verdict {
            name: "theta_bounded_by_initial".into(),
            passed: theta_ok,
        });
    }
    Ok(StudyReport {
        kind: StudyKind::EpsContinuity,
        ladder: ladder.to_vec(),
        columns: [
            "n",
            "eps",
            "dist_v_t0",
            "dist_v_t1",
            "dist_v_t2",
            "dist_v_t3",
            "dist_v_t4",
            "theta_sup",
            "theta0_sup",
        ]
        .map(String::from)
        .to_vec(),
        rows,
        verdicts,
    })
}
