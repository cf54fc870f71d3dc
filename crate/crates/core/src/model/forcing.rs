use std::fmt;
use std::sync::Arc;

/// Space-time callable `(t, x) -> value`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// One forcing component, either evaluated analytically or read from a
/// nodal table that is held constant in time.
#[derive(Clone)]
pub enum ForcingTerm {
    Zero,
    Analytic(SpaceTimeFn),
    Tabulated(Vec<f64>),
}

impl ForcingTerm {
    pub fn analytic(f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ForcingTerm::Analytic(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, ForcingTerm::Zero)
    }

    /// Value at time `t`, node `node` located at `x`.
    pub fn eval(&self, t: f64, node: usize, x: &[f64]) -> f64 {
        match self {
            ForcingTerm::Zero => 0.0,
            ForcingTerm::Analytic(f) => f(t, x),
            ForcingTerm::Tabulated(values) => values[node],
        }
    }
}

impl fmt::Debug for ForcingTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForcingTerm::Zero => f.write_str("Zero"),
            ForcingTerm::Analytic(_) => f.write_str("Analytic(..)"),
            ForcingTerm::Tabulated(v) => write!(f, "Tabulated({} values)", v.len()),
        }
    }
}

/// Forcings `u` (bounded) and `v` (square integrable in time).
#[derive(Debug, Clone)]
pub struct Forcing {
    pub u: ForcingTerm,
    pub v: ForcingTerm,
    /// Declared bound on `sup |u|`.
    pub u_inf_bound: f64,
}

impl Forcing {
    pub fn zero() -> Self {
        Forcing {
            u: ForcingTerm::Zero,
            v: ForcingTerm::Zero,
            u_inf_bound: 0.0,
        }
    }

    pub fn new(u: ForcingTerm, v: ForcingTerm, u_inf_bound: f64) -> Self {
        Forcing { u, v, u_inf_bound }
    }
}
