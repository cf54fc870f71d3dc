//! Model constants, material functions, the regulariser family `gamma_eps`
//! and the truncation machinery.

mod forcing;
mod material;
mod truncation;

pub use forcing::{Forcing, ForcingTerm, SpaceTimeFn};
pub use material::{preset, MaterialFunctions, Polynomial, ScalarFn, PRESETS};
pub use truncation::{
    choose_truncation, choose_truncation_level, LipschitzBounds, TruncationBundle,
    TruncationLevel, LIPSCHITZ_SAMPLES,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants {
    pub mu: f64,
    pub nu: f64,
    pub eps: f64,
    pub t_final: f64,
    pub tau: f64,
    pub delta_star: f64,
    c0: f64,
}

impl ModelConstants {
    /// `t_final = 0` is accepted and yields a run without steps.
    pub fn new(mu: f64, nu: f64, eps: f64, t_final: f64, tau: f64, delta_star: f64) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("mu", mu)?;
        positive("nu", nu)?;
        positive("tau", tau)?;
        positive("delta_star", delta_star)?;
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
        }
        if !(t_final.is_finite() && t_final >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "final time must be >= 0, got {t_final}"
            )));
        }
        let c0 = 0.25f64.min(mu * mu).min(delta_star / 2.0).min(nu * nu);
        Ok(ModelConstants {
            mu,
            nu,
            eps,
            t_final,
            tau,
            delta_star,
            c0,
        })
    }

    /// Dissipation constant `min{1/4, mu^2, delta_star/2, nu^2}`.
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// Number of steps `ceil(T / tau)`, robust to round-off in the ratio.
    pub fn step_count(&self) -> usize {
        let r = self.t_final / self.tau;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * n.max(1.0) {
            n as usize
        } else {
            r.ceil() as usize
        }
    }

    pub fn with_tau(self, tau: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, self.eps, self.t_final, tau, self.delta_star)
    }

    pub fn with_eps(self, eps: f64) -> Result<Self> {
        Self::new(self.mu, self.nu, eps, self.t_final, self.tau, self.delta_star)
    }
}

/// `sqrt(eps^2 + |y|^2)`.
pub fn gamma_eps(eps: f64, y: &[f64]) -> f64 {
    y.iter().fold(eps, |acc, v| acc.hypot(*v))
}

/// Fenchel conjugate of [`gamma_eps`]: `-eps * sqrt(1 - |p|^2)` on the closed
/// unit ball and `+inf` outside it.
pub fn gamma_eps_conjugate(eps: f64, p: &[f64]) -> f64 {
    let p2: f64 = p.iter().map(|v| v * v).sum();
    if p2 <= 1.0 {
        -eps * (1.0 - p2).sqrt()
    } else {
        f64::INFINITY
    }
}
