//! Subcommand drivers. Each returns a [`Summary`] whose checks decide the
//! exit code; solver failures become failed checks rather than errors.

use std::fs;
use std::path::PathBuf;

use kwc_core::analysis::{
    comparison_check, eps_continuity_study, eps_ladder, eta_suite, oracle_suite, perturbation_direction,
    tau_refinement_study, EpsPerturbation, StudyReport,
};
use kwc_core::{run, Problem, RunResult};
use serde::Serialize;

use crate::config::{LoadedConfig, StudyName};
use crate::output::{write_energy_csv, write_snapshots, write_study};

pub const ORACLE_INSTANCES: usize = 100;
pub const ORACLE_EPS: [f64; 3] = [0.0, 0.01, 1.0];
pub const ORACLE_V_TOL: f64 = 1e-6;
pub const ORACLE_OBJ_TOL: f64 = 1e-9;
pub const ETA_TESTS: usize = 20;
pub const ETA_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub outdir: Option<PathBuf>,
    pub tau_ladder: Option<Vec<f64>>,
    pub eps_ladder: Option<Vec<f64>>,
    /// Perturb the initial data along the eps ladder.
    pub perturb: bool,
    pub seed: u64,
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Machine-readable outcome printed as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub checks: Vec<Check>,
    pub failures: Vec<String>,
    pub outputs: Vec<String>,
}

impl Summary {
    fn new(command: &str, m: Option<f64>) -> Self {
        Summary {
            command: command.to_string(),
            passed: true,
            m,
            checks: Vec::new(),
            failures: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn push(&mut self, check: Check) {
        if !check.passed {
            self.passed = false;
            self.failures.push(check.name.clone());
        }
        self.checks.push(check);
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

fn log(opts: &Options, msg: impl AsRef<str>) {
    if !opts.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn output_dir(cfg: &LoadedConfig, opts: &Options) -> PathBuf {
    opts.outdir
        .clone()
        .unwrap_or_else(|| cfg.config.base_dir.join(&cfg.config.output.dir))
}

fn run_checked(problem: &Problem, summary: &mut Summary) -> Option<RunResult> {
    match run(problem) {
        Ok(r) => {
            summary.push(Check::new("run", true, format!("{} steps", r.reports.len())));
            Some(r)
        }
        Err(e) => {
            summary.push(Check::new("run", false, e.to_string()));
            None
        }
    }
}

fn energy_check(r: &RunResult) -> Check {
    let bad: Vec<usize> = r.reports.iter().filter(|x| x.violated()).map(|x| x.step_index).collect();
    let worst = r
        .reports
        .iter()
        .map(|x| x.slack / (1.0 + x.f_prev.abs()))
        .fold(f64::INFINITY, f64::min);
    let detail = if bad.is_empty() {
        format!("min relative slack {worst:.3e}")
    } else {
        format!("violated at steps {bad:?}")
    };
    Check::new("energy_inequality", bad.is_empty(), detail)
}

fn monotone_check(problem: &Problem, r: &RunResult) -> Check {
    let tol = problem.tolerances.tol_energy;
    let e = r.energies();
    let bad: Vec<usize> = (1..e.len())
        .filter(|&i| e[i] > e[i - 1] + tol * (1.0 + e[i - 1].abs()))
        .collect();
    let detail = if bad.is_empty() {
        "energy nonincreasing".to_string()
    } else {
        format!("energy increases at steps {bad:?}")
    };
    Check::new("energy_monotone", bad.is_empty(), detail)
}

fn maximum_principle_checks(problem: &Problem, r: &RunResult) -> Vec<Check> {
    let v_zero = problem.forcing.v.is_zero();
    let rep = comparison_check(r, v_zero, problem.tolerances.tol_maxprin);
    let steps = |q: &str| -> Vec<usize> {
        rep.violations
            .iter()
            .filter(|v| v.quantity == q)
            .map(|v| v.index)
            .collect()
    };
    let eta_bad = steps("eta");
    let eta_max = rep.eta_range.iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
    let mut out = vec![Check::new(
        "eta_maximum_principle",
        eta_bad.is_empty(),
        if eta_bad.is_empty() {
            format!("max |eta| {eta_max:.6} <= M = {:.6}", rep.m)
        } else {
            format!("|eta| > M at steps {eta_bad:?}")
        },
    )];
    if let Some(b) = rep.theta_bound {
        let theta_bad = steps("theta");
        let theta_max = rep.theta_range.iter().map(|(a, b)| a.abs().max(b.abs())).fold(0.0, f64::max);
        out.push(Check::new(
            "theta_maximum_principle",
            theta_bad.is_empty(),
            if theta_bad.is_empty() {
                format!("max |theta| {theta_max:.6} <= {b:.6}")
            } else {
                format!("|theta| > |theta_0|_inf at steps {theta_bad:?}")
            },
        ));
    }
    out
}

fn study_checks(report: &StudyReport, summary: &mut Summary) {
    for v in &report.verdicts {
        summary.push(Check::new(
            format!("{}:{}", report.kind.name(), v.name),
            v.passed,
            "",
        ));
    }
}

fn default_tau_ladder(tau: f64) -> Vec<f64> {
    vec![4.0 * tau, 2.0 * tau, tau, 0.5 * tau]
}

fn run_study(cfg: &LoadedConfig, opts: &Options, kind: StudyName, summary: &mut Summary) {
    let p = &cfg.problem;
    let result = match kind {
        StudyName::Tau => {
            let ladder = opts
                .tau_ladder
                .clone()
                .unwrap_or_else(|| default_tau_ladder(p.constants.tau));
            log(opts, format!("tau ladder {ladder:?}"));
            tau_refinement_study(p, &ladder)
        }
        StudyName::Eps => {
            let ladder = opts
                .eps_ladder
                .clone()
                .unwrap_or_else(|| eps_ladder(p.constants.eps, 6));
            log(opts, format!("eps ladder {ladder:?}"));
            let pert = if opts.perturb {
                perturbation_direction(&p.grid).map(|d| {
                    Some(EpsPerturbation {
                        eta: d.clone(),
                        theta: d,
                    })
                })
            } else {
                Ok(None)
            };
            pert.and_then(|d| eps_continuity_study(p, &ladder, d.as_ref()))
        }
    };
    let name = match kind {
        StudyName::Tau => "tau",
        StudyName::Eps => "eps",
    };
    match result {
        Ok(report) => {
            log(opts, report.summary());
            study_checks(&report, summary);
            write_outputs(summary, output_dir(cfg, opts), |dir| {
                write_study(dir, &report).map(|p| vec![p])
            });
        }
        Err(e) => summary.push(Check::new(format!("{name}:study"), false, e.to_string())),
    }
}

fn write_outputs(
    summary: &mut Summary,
    dir: PathBuf,
    f: impl FnOnce(&std::path::Path) -> Result<Vec<PathBuf>, crate::output::OutputError>,
) {
    let result = fs::create_dir_all(&dir)
        .map_err(|e| format!("{}: {e}", dir.display()))
        .and_then(|_| f(&dir).map_err(|e| e.to_string()));
    match result {
        Ok(paths) => summary
            .outputs
            .extend(paths.iter().map(|p| p.display().to_string())),
        Err(e) => summary.push(Check::new("write_outputs", false, e)),
    }
}

/// Runs the configured problem, writes `energy.csv` and snapshots, then the
/// studies listed in the config.
pub fn run_command(cfg: &LoadedConfig, opts: &Options) -> Summary {
    let p = &cfg.problem;
    let mut summary = Summary::new("run", Some(p.m()));
    let Some(r) = run_checked(p, &mut summary) else {
        return summary;
    };
    summary.push(energy_check(&r));
    let stride = cfg.config.output.snapshot_stride;
    write_outputs(&mut summary, output_dir(cfg, opts), |dir| {
        let energy = dir.join("energy.csv");
        write_energy_csv(&energy, &r)?;
        let mut paths = vec![energy];
        paths.extend(write_snapshots(dir, &r, stride)?);
        Ok(paths)
    });
    for &kind in &cfg.config.output.studies {
        run_study(cfg, opts, kind, &mut summary);
    }
    summary
}

pub fn converge_tau(cfg: &LoadedConfig, opts: &Options) -> Summary {
    let mut summary = Summary::new("converge-tau", Some(cfg.problem.m()));
    run_study(cfg, opts, StudyName::Tau, &mut summary);
    summary
}

pub fn continuity_eps(cfg: &LoadedConfig, opts: &Options) -> Summary {
    let mut summary = Summary::new("continuity-eps", Some(cfg.problem.m()));
    run_study(cfg, opts, StudyName::Eps, &mut summary);
    summary
}

/// Energy inequality and monotonicity, both maximum principles, positive
/// Hessians and bitwise agreement of two identical runs.
pub fn verify(cfg: &LoadedConfig, _opts: &Options) -> Summary {
    let p = &cfg.problem;
    let mut summary = Summary::new("verify", Some(p.m()));
    let Some(r) = run_checked(p, &mut summary) else {
        return summary;
    };
    summary.push(energy_check(&r));
    if p.forcing.u.is_zero() && p.forcing.v.is_zero() {
        summary.push(monotone_check(p, &r));
    }
    for c in maximum_principle_checks(p, &r) {
        summary.push(c);
    }
    let not_pd: Vec<usize> = r
        .states
        .iter()
        .filter(|s| !s.diagnostics.hessian_positive)
        .map(|s| s.index)
        .collect();
    summary.push(Check::new(
        "hessian_positive",
        not_pd.is_empty(),
        if not_pd.is_empty() {
            "positive definite at every step".to_string()
        } else {
            format!("indefinite at steps {not_pd:?}")
        },
    ));
    match run(p) {
        Ok(twin) => {
            let same = twin.states.len() == r.states.len()
                && twin
                    .states
                    .iter()
                    .zip(&r.states)
                    .all(|(a, b)| bitwise(a.eta.values(), b.eta.values()) && bitwise(a.theta.values(), b.theta.values()));
            summary.push(Check::new(
                "twin_determinism",
                same,
                if same { "bitwise identical" } else { "runs differ" },
            ));
        }
        Err(e) => summary.push(Check::new("twin_determinism", false, e.to_string())),
    }
    summary
}

fn bitwise(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Cross-checks both step solvers on random small instances.
pub fn oracle(opts: &Options) -> Summary {
    let mut summary = Summary::new("oracle", None);
    match oracle_suite(ORACLE_INSTANCES, &ORACLE_EPS, opts.seed) {
        Ok(cases) => {
            let ok = cases.iter().filter(|c| c.within(ORACLE_V_TOL, ORACLE_OBJ_TOL)).count();
            let worst_v = cases.iter().map(|c| c.v_distance).fold(0.0, f64::max);
            let worst_obj = cases.iter().map(|c| c.objective_gap).fold(0.0, f64::max);
            summary.push(Check::new(
                "theta_oracle",
                ok == cases.len(),
                format!(
                    "{ok}/{} instances within tolerance (worst V distance {worst_v:.2e}, worst objective gap {worst_obj:.2e})",
                    cases.len()
                ),
            ));
        }
        Err(e) => summary.push(Check::new("theta_oracle", false, e.to_string())),
    }
    match eta_suite(ORACLE_INSTANCES, ETA_TESTS, opts.seed) {
        Ok(cases) => {
            let worst = cases.iter().map(|c| c.max_tested_residual).fold(0.0, f64::max);
            summary.push(Check::new(
                "eta_residual",
                worst <= ETA_RESIDUAL_TOL,
                format!("worst tested residual {worst:.2e} over {} instances", cases.len()),
            ));
        }
        Err(e) => summary.push(Check::new("eta_residual", false, e.to_string())),
    }
    summary
}
