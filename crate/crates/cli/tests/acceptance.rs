//! Acceptance checks, one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use kwc_core::analysis::{
    eps_continuity_study, eps_ladder, eta_suite, gronwall_stability, oracle_suite, perturbation_direction,
    tau_refinement_study, EpsPerturbation,
};
use kwc_core::energy::summation_by_parts;
use kwc_core::model::{Polynomial, TruncationBundle};
use kwc_core::stepper::{eta_step, EtaOptions};
use kwc_core::{
    gamma_eps, gamma_eps_conjugate, preset, run, Field, Forcing, Grid, MaterialFunctions, ModelConstants, Problem,
    RunResult, VectorField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn base_problem(eps: f64) -> Problem {
    let (c, f) = preset("default").unwrap();
    let c = c.with_eps(eps).unwrap();
    let g = Arc::new(Grid::new(1, &[1.0], &[64]).unwrap());
    let eta0 = Field::from_fn(g.clone(), |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin()).unwrap();
    let theta0 = Field::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
    Problem::new(c, f, eta0, theta0, Forcing::zero()).unwrap()
}

fn base_runs() -> Vec<(f64, RunResult, f64)> {
    [0.0, 0.1]
        .into_iter()
        .map(|eps| {
            let start = Instant::now();
            let r = run(&base_problem(eps)).unwrap();
            (eps, r, start.elapsed().as_secs_f64())
        })
        .collect()
}

fn criterion_1(runs: &[(f64, RunResult, f64)]) -> Outcome {
    let mut ok = true;
    let mut worst = f64::INFINITY;
    let mut slowest = 0.0f64;
    for (_, r, secs) in runs {
        for rep in &r.reports {
            ok &= rep.slack >= -1e-8 * (1.0 + rep.f_prev);
            worst = worst.min(rep.slack / (1.0 + rep.f_prev.abs()));
        }
        slowest = slowest.max(*secs);
    }
    ok &= slowest < 30.0;
    outcome(ok, format!("min relative slack {worst:.3e}, slowest run {slowest:.3}s"))
}

fn criterion_2(runs: &[(f64, RunResult, f64)]) -> Outcome {
    let mut ok = true;
    let mut max_rise = f64::NEG_INFINITY;
    for (_, r, _) in runs {
        let e = r.energies();
        for w in e.windows(2) {
            max_rise = max_rise.max(w[1] - w[0]);
            ok &= w[1] <= w[0] + 1e-8;
        }
    }
    outcome(ok, format!("largest energy change per step {max_rise:.3e}"))
}

fn criterion_3(runs: &[(f64, RunResult, f64)]) -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (eps, r, _) in runs {
        let theta0 = r.states[0].theta.inf_norm();
        let eta_max = r.states.iter().map(|s| s.eta.inf_norm()).fold(0.0, f64::max);
        let theta_max = r.states.iter().map(|s| s.theta.inf_norm()).fold(0.0, f64::max);
        ok &= eta_max <= r.m && theta_max <= theta0 + 1e-8;
        detail.push(format!(
            "eps={eps}: max|eta| {eta_max:.6} <= M {:.6}, max|theta| {theta_max:.10} vs {theta0:.10}",
            r.m
        ));
    }
    outcome(ok, detail.join("; "))
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cases = oracle_suite(100, &[0.0, 0.01, 1.0], 4).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let within = cases.iter().filter(|c| c.within(1e-6, 1e-9)).count();
    let worst_v = cases.iter().map(|c| c.v_distance).fold(0.0, f64::max);
    let worst_obj = cases.iter().map(|c| c.objective_gap).fold(0.0, f64::max);
    outcome(
        within == 100 && cases.len() == 100 && secs < 120.0,
        format!("{within}/100 within tolerance, worst V {worst_v:.2e}, worst objective {worst_obj:.2e}, {secs:.2}s"),
    )
}

fn criterion_5() -> Outcome {
    let cases = eta_suite(100, 20, 5).unwrap();
    let worst = cases.iter().map(|c| c.max_tested_residual).fold(0.0, f64::max);
    // g(r) = r, tau = 1, zero previous state, constant forcing 1
    let f = MaterialFunctions::from_polynomials(
        "linear",
        Polynomial::new(vec![0.0, 1.0]),
        Polynomial::new(vec![0.0, 0.0, 1.0]),
        Polynomial::new(vec![1.0]),
    )
    .unwrap();
    let b = TruncationBundle::new(2.0, f).unwrap();
    let c = ModelConstants::new(0.5, 0.5, 0.0, 1.0, 1.0, 1.0).unwrap();
    let g = Arc::new(Grid::new(1, &[1.0], &[6]).unwrap());
    let eta = eta_step(
        &Field::zeros(g.clone()),
        &Field::constant(g.clone(), 2.0),
        &Field::constant(g, 1.0),
        &c,
        &b,
        &EtaOptions::default(),
    )
    .unwrap();
    let scalar_err = eta.values().iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    outcome(
        cases.len() == 100 && worst <= 1e-9 && scalar_err <= 1e-12,
        format!("worst tested residual {worst:.2e} over {} instances, closed form error {scalar_err:.2e}", cases.len()),
    )
}

fn criterion_6() -> Outcome {
    let rep = tau_refinement_study(&base_problem(0.0), &[0.04, 0.02, 0.01, 0.005]).unwrap();
    let ok = rep.verdict("eta_decreasing") == Some(true) && rep.verdict("theta_decreasing") == Some(true);
    let fmt = |v: Vec<f64>| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    outcome(
        ok,
        format!(
            "eta [{}], theta [{}]",
            fmt(rep.column("eta_sup_h").unwrap()),
            fmt(rep.column("theta_sup_h").unwrap())
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = base_problem(0.0);
    let ladder = eps_ladder(0.0, 6);
    let dir = perturbation_direction(&p.grid).unwrap();
    let pert = EpsPerturbation {
        eta: dir.clone(),
        theta: dir,
    };
    let plain = eps_continuity_study(&p, &ladder, None).unwrap();
    let perturbed = eps_continuity_study(&p, &ladder, Some(&pert)).unwrap();
    let name = "distance_at_final_time_decreasing";
    let ok = plain.verdict(name) == Some(true) && perturbed.verdict(name) == Some(true);
    let last = |r: &kwc_core::analysis::StudyReport| {
        let d = r.column("dist_v_t4").unwrap();
        format!("{:.3e} -> {:.3e}", d[0], d[d.len() - 1])
    };
    outcome(ok, format!("V distance at T: plain {}, perturbed {}", last(&plain), last(&perturbed)))
}

fn criterion_8() -> Outcome {
    let p = base_problem(0.0);
    let zero = gronwall_stability(&p, 0.0, 8).unwrap();
    let full = gronwall_stability(&p, 1e-3, 8).unwrap();
    let half = gronwall_stability(&p, 5e-4, 8).unwrap();
    let ratio = full.j0() / half.j0();
    let ok = zero.identical && full.envelope_respected() && (ratio / 4.0 - 1.0).abs() <= 0.05;
    outcome(
        ok,
        format!(
            "twins identical {}, envelope crossings {}, J(0) ratio {ratio:.6}",
            zero.identical,
            full.crossings().len()
        ),
    )
}

fn random_field(g: &Arc<Grid>, rng: &mut ChaCha8Rng) -> Field {
    let n = g.node_count();
    Field::new(g.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut adj = 0.0f64;
    for g in [Grid::new(1, &[2.0], &[17]).unwrap(), Grid::new(2, &[1.0, 0.7], &[6, 5]).unwrap()] {
        let g = Arc::new(g);
        for _ in 0..20 {
            let f = random_field(&g, &mut rng);
            let comps = (0..g.dim())
                .map(|_| (0..g.cell_count()).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let w = VectorField::new(g.clone(), comps).unwrap();
            let lhs = g.inner_h_vec(&g.gradient(&f).unwrap(), &w).unwrap();
            let rhs = -g.inner_h(&f, &g.divergence(&w).unwrap()).unwrap();
            adj = adj.max((lhs - rhs).abs());
        }
    }
    let mut fy_gap = f64::INFINITY;
    let mut fy_eq = 0.0f64;
    let mut unif = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let eps = rng.gen_range(0.0..2.0);
        let y = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
        let r: f64 = rng.gen_range(0.0f64..1.0).sqrt();
        let phi = rng.gen_range(0.0..2.0 * PI);
        let p = [r * phi.cos(), r * phi.sin()];
        let dot = p[0] * y[0] + p[1] * y[1];
        fy_gap = fy_gap.min(gamma_eps(eps, &y) + gamma_eps_conjugate(eps, &p) - dot);
        let gy = gamma_eps(eps, &y);
        if gy > 0.0 {
            let q = [y[0] / gy, y[1] / gy];
            let eq = gy + gamma_eps_conjugate(eps, &q) - (q[0] * y[0] + q[1] * y[1]);
            fy_eq = fy_eq.max(eq.abs());
        }
        let eps0 = rng.gen_range(0.0..2.0);
        unif = unif.max((gamma_eps(eps, &y) - gamma_eps(eps0, &y)).abs() - (eps - eps0).abs());
    }
    let w: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..1.0)).collect();
    let z: Vec<Vec<f64>> = (0..15)
        .map(|_| (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let sbp = summation_by_parts(&z, &w);
    let sbp_err = (sbp.lhs - sbp.rhs).abs();
    let ok = adj <= 1e-12 && fy_gap >= -1e-10 && fy_eq <= 1e-10 && sbp_err <= 1e-12 && unif <= 1e-15;
    outcome(
        ok,
        format!(
            "adjointness {adj:.1e}, Fenchel-Young min gap {fy_gap:.1e} / equality {fy_eq:.1e}, summation by parts {sbp_err:.1e}, uniform bound excess {unif:.1e}"
        ),
    )
}

fn run_cli(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_kwc"))
        .args(["run", "--quiet", "-c"])
        .arg(config)
        .arg("-o")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn criterion_10() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut compared = 0;
    let mut ok = true;
    for name in ["smoke.cfg", "smoke_2d.cfg"] {
        let cfg = configs.join(name);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        ok &= run_cli(&cfg, a.path()) && run_cli(&cfg, b.path());
        let (fa, fb) = (sorted_files(a.path()), sorted_files(b.path()));
        ok &= !fa.is_empty() && fa.len() == fb.len();
        for (x, y) in fa.iter().zip(&fb) {
            ok &= x.file_name() == y.file_name() && std::fs::read(x).unwrap() == std::fs::read(y).unwrap();
            compared += 1;
        }
    }
    outcome(ok, format!("{compared} output files compared byte for byte"))
}

fn main() {
    let runs = base_runs();
    let results = [
        (1, criterion_1(&runs)),
        (2, criterion_2(&runs)),
        (3, criterion_3(&runs)),
        (4, criterion_4()),
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
    ];
    let mut failed = 0;
    for (n, o) in &results {
        println!("criterion {n:>2}: {} ({})", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
