use std::sync::Arc;

use kwc_core::analysis::theta_step_oracle;
use kwc_core::model::TruncationBundle;
use kwc_core::stepper::{EtaOptions, EtaProblem, ThetaOptions, ThetaProblem, ThetaSolver};
use kwc_core::{preset, Field, Grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn grids() -> Vec<Grid> {
    vec![
        Grid::new(1, &[1.0], &[20]).unwrap(),
        Grid::new(2, &[1.0, 0.8], &[7, 6]).unwrap(),
    ]
}

#[test]
fn theta_step_satisfies_the_variational_inequality() {
    let (c, f) = preset("default").unwrap();
    let bundle = TruncationBundle::new(1.5, f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for grid in grids() {
        let n = grid.node_count();
        for eps in [0.0, 0.05, 1.0] {
            for solver in [ThetaSolver::DualGradient, ThetaSolver::ChambollePock] {
                let consts = c.with_eps(eps).unwrap().with_tau(rng.gen_range(0.01..0.2)).unwrap();
                let eta = random(n, -1.4, 1.4, &mut rng);
                let theta_prev = random(n, -1.0, 1.0, &mut rng);
                let v = random(n, -0.5, 0.5, &mut rng);
                let tp = ThetaProblem::new(&grid, &eta, &theta_prev, &v, &consts, &bundle).unwrap();
                let opts = ThetaOptions {
                    solver,
                    tol: 1e-12,
                    max_iter: 200_000,
                };
                let sol = tp.solve(None, &opts).unwrap();
                let scale = 1.0 + sol.objective.abs();
                for _ in 0..50 {
                    let psi = random(n, -2.0, 2.0, &mut rng);
                    let s = tp.inequality_slack(&sol.theta, &psi);
                    assert!(s >= -1e-7 * scale, "{solver:?} eps {eps}: slack {s:e}");
                }
                // the minimiser beats every tested competitor
                for _ in 0..10 {
                    let psi = random(n, -2.0, 2.0, &mut rng);
                    assert!(tp.objective(&psi) >= sol.objective - 1e-9 * scale);
                }
            }
        }
    }
}

#[test]
fn both_theta_solvers_agree_with_the_dense_oracle() {
    let (c, f) = preset("default").unwrap();
    let bundle = TruncationBundle::new(1.5, f).unwrap();
    let g = Arc::new(Grid::new(1, &[1.0], &[5]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for eps in [0.0, 0.01, 1.0] {
        let consts = c.with_eps(eps).unwrap().with_tau(0.1).unwrap();
        let n = g.node_count();
        let eta = Field::new(g.clone(), random(n, -1.0, 1.0, &mut rng)).unwrap();
        let theta_prev = Field::new(g.clone(), random(n, -1.0, 1.0, &mut rng)).unwrap();
        let v = Field::new(g.clone(), random(n, -0.3, 0.3, &mut rng)).unwrap();
        let reference = theta_step_oracle(&eta, &theta_prev, &v, &consts, &bundle, 1).unwrap();
        for solver in [ThetaSolver::DualGradient, ThetaSolver::ChambollePock] {
            let tp = ThetaProblem::new(&g, eta.values(), theta_prev.values(), v.values(), &consts, &bundle).unwrap();
            let opts = ThetaOptions {
                solver,
                tol: 1e-14,
                max_iter: 1_000_000,
            };
            let sol = tp.solve(None, &opts).unwrap();
            let d = Field::new(g.clone(), sol.theta).unwrap().sub(&reference).unwrap();
            assert!(g.norm_v(&d).unwrap() < 1e-5, "{solver:?} eps {eps}");
        }
    }
}

#[test]
fn eta_step_residual_small_against_random_tests() {
    let (c, f) = preset("default").unwrap();
    let bundle = TruncationBundle::new(2.0, f).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for grid in grids() {
        let n = grid.node_count();
        for _ in 0..5 {
            let consts = c.with_tau(rng.gen_range(0.005..0.1)).unwrap();
            let eta_prev = random(n, -1.5, 1.5, &mut rng);
            let theta = random(n, -1.0, 1.0, &mut rng);
            let u = random(n, -0.5, 0.5, &mut rng);
            let ep = EtaProblem::new(&grid, &eta_prev, &theta, &u, &consts, &bundle);
            let sol = ep.solve(&EtaOptions::default()).unwrap();
            assert!(sol.hessian_positive);
            for _ in 0..20 {
                let phi = random(n, -1.0, 1.0, &mut rng);
                assert!(ep.tested_residual(&sol.eta, &phi) <= 1e-9);
            }
        }
    }
}
