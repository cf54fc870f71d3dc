use std::f64::consts::PI;
use std::sync::Arc;

use kwc_core::analysis::{
    comparison_check, eps_continuity_study, eps_ladder, gronwall_stability, ordered_theta_check, perturbation_direction,
    tau_refinement_study, time_sup_distance_h, EpsPerturbation,
};
use kwc_core::{preset, run, Field, Forcing, ForcingTerm, Grid, ModelConstants, Problem};

fn problem(cells: &[usize], eta_flat: bool) -> Problem {
    let (c, f) = preset("default").unwrap();
    let c = ModelConstants::new(c.mu, c.nu, 0.05, 0.2, 0.01, c.delta_star).unwrap();
    let lengths = vec![1.0; cells.len()];
    let g = Arc::new(Grid::new(cells.len(), &lengths, cells).unwrap());
    let eta0 = if eta_flat {
        Field::constant(g.clone(), 0.8)
    } else {
        Field::from_fn(g.clone(), |x| 1.0 + 0.2 * (2.0 * PI * x[0]).sin()).unwrap()
    };
    let theta0 = Field::from_fn(g, |x| (PI * x[0]).sin()).unwrap();
    Problem::new(c, f, eta0, theta0, Forcing::zero()).unwrap()
}

#[test]
fn tau_study_in_two_dimensions() {
    let p = problem(&[8, 6], false);
    let r = tau_refinement_study(&p, &[0.04, 0.02, 0.01, 0.005]).unwrap();
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.verdict("eta_decreasing"), Some(true));
    assert_eq!(r.verdict("theta_decreasing"), Some(true));
    assert_eq!(r.verdict("dissipation_bounded"), Some(true));
    // first-order behaviour: each halving roughly halves the differences
    for rate in r.column("eta_rate").unwrap().into_iter().skip(1) {
        assert!(rate > 0.5 && rate < 1.5, "rate {rate}");
    }
    assert!(r.summary().contains("eta_decreasing: pass"));
}

#[test]
fn sup_distance_is_symmetric_and_zero_on_itself() {
    let p = problem(&[16], false);
    let a = run(&p).unwrap();
    let b = run(&p.clone().with_tau(0.02).unwrap()).unwrap();
    assert_eq!(time_sup_distance_h(&a, &a).unwrap(), (0.0, 0.0));
    let (e1, t1) = time_sup_distance_h(&a, &b).unwrap();
    let (e2, t2) = time_sup_distance_h(&b, &a).unwrap();
    assert!((e1 - e2).abs() < 1e-15 && (t1 - t2).abs() < 1e-15);
    assert!(e1 > 0.0);
}

#[test]
fn eps_study_with_angle_only_perturbation() {
    let p = problem(&[24], true);
    let grid = p.grid.clone();
    let pert = EpsPerturbation {
        eta: Field::zeros(grid.clone()),
        theta: perturbation_direction(&grid).unwrap(),
    };
    let r = eps_continuity_study(&p, &eps_ladder(p.constants.eps, 5), Some(&pert)).unwrap();
    assert_eq!(r.rows.len(), 5);
    assert!(r.passed(), "{}", r.summary());
    let d0 = r.column("dist_v_t0").unwrap();
    // the initial distance is the size of the perturbation itself
    for (k, d) in d0.iter().enumerate() {
        assert!((d - 0.5f64.powi(k as i32 + 1)).abs() < 1e-12);
    }
}

#[test]
fn eps_study_requires_monotone_ladder() {
    let p = problem(&[8], false);
    assert!(eps_continuity_study(&p, &[0.1], None).is_err());
    assert!(eps_continuity_study(&p, &[0.1, 0.3, 0.2], None).is_err());
}

#[test]
fn ordered_angles_stay_ordered_under_flat_order_parameter() {
    let p = problem(&[20], true);
    let r = run(&p).unwrap();
    let lower = p.theta0.map(|v| v - 0.2);
    let upper = p.theta0.clone();
    let rep = ordered_theta_check(&p, &r, &lower, &upper).unwrap();
    assert_eq!(rep.initial, 0.0);
    assert!(rep.ordered(1e-8), "growth {}", rep.growth);
    assert_eq!(rep.positive_part.len(), r.states.len());
}

#[test]
fn comparison_check_flags_angle_bound_only_without_angle_forcing() {
    let (c, f) = preset("flat-mobility").unwrap();
    let c = ModelConstants::new(c.mu, c.nu, 0.1, 0.1, 0.01, 1.0).unwrap();
    let g = Arc::new(Grid::new(1, &[1.0], &[16]).unwrap());
    let theta0 = Field::from_fn(g.clone(), |x| 0.5 * (PI * x[0]).cos()).unwrap();
    let v = ForcingTerm::analytic(|_, _| 5.0);
    let p = Problem::new(c, f, Field::constant(g, 1.0), theta0, Forcing::new(ForcingTerm::Zero, v, 0.0)).unwrap();
    let r = run(&p).unwrap();
    // a constant push raises the angle above its initial bound
    let with_bound = comparison_check(&r, true, 1e-8);
    assert!(with_bound.violations.iter().any(|v| v.quantity == "theta"));
    let without = comparison_check(&r, false, 1e-8);
    assert!(without.passed());
    assert!(without.theta_bound.is_none());
}

#[test]
fn gronwall_envelope_in_two_dimensions() {
    let p = problem(&[6, 6], false);
    let zero = gronwall_stability(&p, 0.0, 1).unwrap();
    assert!(zero.identical);
    assert!(zero.j.iter().all(|&j| j == 0.0));
    let a = gronwall_stability(&p, 1e-3, 1).unwrap();
    let b = gronwall_stability(&p, 5e-4, 1).unwrap();
    assert!(a.envelope_respected());
    assert!(!a.identical);
    assert!((a.j0() / b.j0() / 4.0 - 1.0).abs() < 0.05);
    assert!(a.c3 > 0.0 && a.embedding_constant >= 1.0);
}
