use super::material::{sample_points, MaterialFunctions, ScalarFn};
use crate::error::{Error, Result};
use crate::grid::Field;

pub const LIPSCHITZ_SAMPLES: usize = 10_000;
const SAFETY_FACTOR: f64 = 1.05;
const SEARCH_LIMIT: f64 = 1e9;
const BISECTION_TOL: f64 = 1e-6;

/// Sampled Lipschitz constants of `g`, `alpha`, `alpha0` on `[-M, M]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzBounds {
    pub g: f64,
    pub alpha: f64,
    pub alpha0: f64,
}

impl LipschitzBounds {
    pub fn estimate(funcs: &MaterialFunctions, m: f64) -> Self {
        let xs: Vec<f64> = sample_points(m).collect();
        let quotient = |f: &ScalarFn| {
            let vals: Vec<f64> = xs.iter().map(|&x| f.eval(x)).collect();
            xs.windows(2)
                .zip(vals.windows(2))
                .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
                .fold(0.0, f64::max)
        };
        LipschitzBounds {
            g: quotient(&funcs.g),
            alpha: quotient(&funcs.alpha),
            alpha0: quotient(&funcs.alpha0),
        }
    }
}

/// Outcome of the scalar search for the truncation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLevel {
    /// Smallest admissible level found by the search.
    pub base: f64,
    /// Level actually used, `base` times the safety factor.
    pub m: f64,
}

/// Smallest `M` with `M >= max(|eta0|_inf, |u|_inf)`, `g(M) >= |u|_inf` and
/// `g(-M) <= -|u|_inf`, found by doubling then bisection and inflated by 5%.
pub fn choose_truncation_level(eta0_inf: f64, u_bound: f64, g: &ScalarFn) -> Result<TruncationLevel> {
    let u = u_bound.abs();
    let floor = eta0_inf.abs().max(u);
    let admissible = |m: f64| m >= floor && g.eval(m) >= u && g.eval(-m) <= -u;

    // g must actually grow past the forcing level; a g that only touches it
    // (for instance g = 0 with u = 0) is not coercive.
    if !(g.eval(SEARCH_LIMIT) > u && g.eval(-SEARCH_LIMIT) < -u) {
        return Err(Error::TruncationNotFound { limit: SEARCH_LIMIT });
    }

    let start = floor.max(BISECTION_TOL);
    let base = if admissible(start) {
        start
    } else {
        let mut lo = start;
        let mut hi = 2.0 * start;
        while !admissible(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > SEARCH_LIMIT {
                return Err(Error::TruncationNotFound { limit: SEARCH_LIMIT });
            }
        }
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            if admissible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let inflated = base * SAFETY_FACTOR;
    let m = if admissible(inflated) { inflated } else { base };
    Ok(TruncationLevel { base, m })
}

/// The truncation `T_M` and the truncated primitives `alpha_M`, `G_M`.
///
/// Outside `[-M, M]` the primitives continue with the derivative frozen at
/// `+-M`, so `alpha_M' = alpha' o T_M` and `G_M' = g o T_M` everywhere.
#[derive(Debug, Clone)]
pub struct TruncationBundle {
    m: f64,
    funcs: MaterialFunctions,
    lipschitz: LipschitzBounds,
    alpha_at: [f64; 2],
    alpha_prime_at: [f64; 2],
    big_g_at: [f64; 2],
    g_at: [f64; 2],
}

impl TruncationBundle {
    pub fn new(m: f64, funcs: MaterialFunctions) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidParameter(format!("truncation level must be positive, got {m}")));
        }
        let at = |f: &ScalarFn| [f.eval(-m), f.eval(m)];
        Ok(TruncationBundle {
            m,
            lipschitz: LipschitzBounds::estimate(&funcs, m),
            alpha_at: at(&funcs.alpha),
            alpha_prime_at: at(&funcs.alpha_prime),
            big_g_at: at(&funcs.big_g),
            g_at: at(&funcs.g),
            funcs,
        })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn functions(&self) -> &MaterialFunctions {
        &self.funcs
    }

    pub fn lipschitz(&self) -> &LipschitzBounds {
        &self.lipschitz
    }

    #[inline]
    pub fn truncate(&self, r: f64) -> f64 {
        r.clamp(-self.m, self.m)
    }

    #[inline]
    fn inside(&self, r: f64) -> bool {
        r > -self.m && r < self.m
    }

    pub fn alpha_m(&self, r: f64) -> f64 {
        if r > self.m {
            self.alpha_at[1] + self.alpha_prime_at[1] * (r - self.m)
        } else if r < -self.m {
            self.alpha_at[0] + self.alpha_prime_at[0] * (r + self.m)
        } else {
            self.funcs.alpha.eval(r)
        }
    }

    pub fn alpha_m_prime(&self, r: f64) -> f64 {
        self.funcs.alpha_prime.eval(self.truncate(r))
    }

    /// Derivative of `alpha' o T_M`; zero outside `(-M, M)`.
    pub fn alpha_m_second(&self, r: f64) -> f64 {
        if self.inside(r) {
            self.funcs.alpha_second.eval(r)
        } else {
            0.0
        }
    }

    pub fn big_g_m(&self, r: f64) -> f64 {
        if r > self.m {
            self.big_g_at[1] + self.g_at[1] * (r - self.m)
        } else if r < -self.m {
            self.big_g_at[0] + self.g_at[0] * (r + self.m)
        } else {
            self.funcs.big_g.eval(r)
        }
    }

    /// `g o T_M`.
    pub fn g_m(&self, r: f64) -> f64 {
        self.funcs.g.eval(self.truncate(r))
    }

    /// Derivative of `g o T_M`; zero outside `(-M, M)`.
    pub fn g_m_prime(&self, r: f64) -> f64 {
        if self.inside(r) {
            self.funcs.g_prime.eval(r)
        } else {
            0.0
        }
    }

    /// `alpha0 o T_M`.
    pub fn alpha0_m(&self, r: f64) -> f64 {
        self.funcs.alpha0.eval(self.truncate(r))
    }
}

/// Picks `M` for the given initial order parameter and forcing bound and
/// returns the corresponding bundle.
pub fn choose_truncation(eta0: &Field, u_bound: f64, funcs: &MaterialFunctions) -> Result<TruncationBundle> {
    let level = choose_truncation_level(eta0.inf_norm(), u_bound, &funcs.g)?;
    TruncationBundle::new(level.m, funcs.clone())
}
