//! Numerical studies of the scheme: solver cross-checks, refinement in the
//! time step, continuous dependence on `eps` and data, bound checks and
//! twin-run stability.

mod comparison;
mod gronwall;
mod oracle;
mod studies;

pub use comparison::{comparison_check, ordered_theta_check, BoundViolation, ComparisonReport, OrderedThetaReport};
pub use gronwall::{embedding_constant, gronwall_stability, perturbation_direction, StabilityReport};
pub use oracle::{eta_suite, oracle_suite, theta_step_oracle, EtaCase, OracleCase, ORACLE_MAX_NODES};
pub use studies::{eps_continuity_study, eps_ladder, tau_refinement_study, time_sup_distance_h, EpsPerturbation};

use std::fmt::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    TauRefinement,
    EpsContinuity,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::TauRefinement => "tau",
            StudyKind::EpsContinuity => "eps",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
}

/// Tabular outcome of a ladder study. `rows[k][j]` is column `j` for rung
/// `k`; undefined entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub kind: StudyKind,
    pub ladder: Vec<f64>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub verdicts: Vec<Verdict>,
}

impl StudyReport {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn verdict(&self, name: &str) -> Option<bool> {
        self.verdicts.iter().find(|v| v.name == name).map(|v| v.passed)
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Human-readable block listing the table and the verdicts.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "study: {}", self.kind.name());
        let _ = writeln!(s, "{}", self.columns.join("  "));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            let _ = writeln!(s, "{}", cells.join("  "));
        }
        for v in &self.verdicts {
            let _ = writeln!(s, "{}: {}", v.name, if v.passed { "pass" } else { "FAIL" });
        }
        s
    }
}

/// `true` when `xs` is strictly decreasing, or identically zero up to `zero`.
pub fn strictly_decreasing_or_zero(xs: &[f64], zero: f64) -> bool {
    xs.iter().all(|x| x.abs() <= zero) || xs.windows(2).all(|w| w[1] < w[0])
}

/// Outcome of [`fact_star`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactStar {
    pub liminf_a: f64,
    pub liminf_b: f64,
    pub limsup_sum: f64,
    pub hypotheses_hold: bool,
    pub a_converges: bool,
    pub b_converges: bool,
}

/// Finite-sample form of the elementary fact: if `liminf a_n >= a`,
/// `liminf b_n >= b` and `limsup (a_n + b_n) <= a + b`, then `a_n -> a` and
/// `b_n -> b`. Limits inferior and superior are estimated on the second half
/// of the sequences; all comparisons allow the slack `tol`.
pub fn fact_star(a: &[f64], b: &[f64], a_lim: f64, b_lim: f64, tol: f64) -> FactStar {
    let n = a.len().min(b.len());
    let tail = n / 2;
    let min = |xs: &[f64]| xs[tail..n].iter().copied().fold(f64::INFINITY, f64::min);
    let liminf_a = min(a);
    let liminf_b = min(b);
    let limsup_sum = (tail..n).map(|i| a[i] + b[i]).fold(f64::NEG_INFINITY, f64::max);
    let hypotheses_hold = liminf_a >= a_lim - tol && liminf_b >= b_lim - tol && limsup_sum <= a_lim + b_lim + tol;
    // limsup a <= limsup (a + b) - liminf b, and symmetrically for b
    let limsup_a = limsup_sum - liminf_b;
    let limsup_b = limsup_sum - liminf_a;
    FactStar {
        liminf_a,
        liminf_b,
        limsup_sum,
        hypotheses_hold,
        a_converges: hypotheses_hold && limsup_a <= a_lim + 2.0 * tol,
        b_converges: hypotheses_hold && limsup_b <= b_lim + 2.0 * tol,
    }
}
