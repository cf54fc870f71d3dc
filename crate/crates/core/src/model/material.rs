use std::fmt;
use std::sync::Arc;

use super::ModelConstants;
use crate::error::{Error, Result};

/// Shared scalar callable `R -> R`.
#[derive(Clone)]
pub struct ScalarFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl ScalarFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }

    /// Central difference derivative of `f`.
    pub fn derivative_of(f: &ScalarFn) -> ScalarFn {
        let f = f.clone();
        ScalarFn::new(move |x| {
            let h = 1e-5 * (1.0 + x.abs());
            (f.eval(x + h) - f.eval(x - h)) / (2.0 * h)
        })
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

/// Polynomial with ascending coefficients `c[0] + c[1] r + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Primitive vanishing at zero.
    pub fn primitive(&self) -> Polynomial {
        let mut c = vec![0.0];
        c.extend(self.coeffs.iter().enumerate().map(|(k, v)| v / (k + 1) as f64));
        Polynomial::new(c)
    }

    pub fn shifted(&self, s: f64) -> Polynomial {
        let mut c = self.coeffs.clone();
        c[0] += s;
        Polynomial::new(c)
    }

    pub fn to_fn(&self) -> ScalarFn {
        let p = self.clone();
        ScalarFn::new(move |x| p.eval(x))
    }

    /// Global minimum over the real line, or `None` if unbounded below.
    pub fn global_min(&self) -> Option<f64> {
        let d = self.degree();
        let lead = self.coeffs[d];
        if d == 0 {
            return Some(lead);
        }
        if d % 2 == 1 || lead < 0.0 {
            return None;
        }
        // Critical points are roots of the derivative, which lie inside the
        // Cauchy bound of the derivative.
        let dp = self.derivative();
        let dd = dp.degree();
        let bound = 1.0
            + dp.coeffs[..dd]
                .iter()
                .map(|c| (c / dp.coeffs[dd]).abs())
                .fold(0.0, f64::max);
        let n = 20_000;
        let xs: Vec<f64> = (0..=n)
            .map(|i| -bound + 2.0 * bound * i as f64 / n as f64)
            .collect();
        let mut best = xs.iter().map(|&x| self.eval(x)).fold(f64::INFINITY, f64::min);
        for w in xs.windows(2) {
            let (mut a, mut b) = (w[0], w[1]);
            let (fa, fb) = (dp.eval(a), dp.eval(b));
            if fa == 0.0 {
                best = best.min(self.eval(a));
            }
            if fa.signum() * fb.signum() < 0.0 {
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if dp.eval(m).signum() == fa.signum() {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                best = best.min(self.eval(a)).min(self.eval(b));
            }
        }
        Some(best)
    }
}

/// Material functions `g`, `G`, `alpha`, `alpha0` together with the
/// derivatives the solvers need.
#[derive(Debug, Clone)]
pub struct MaterialFunctions {
    pub name: String,
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    pub big_g: ScalarFn,
    pub alpha: ScalarFn,
    pub alpha_prime: ScalarFn,
    pub alpha_second: ScalarFn,
    pub alpha0: ScalarFn,
    /// Known lower bound of `alpha0`, if the family provides one exactly.
    pub delta_star: Option<f64>,
}

const VALIDATION_SAMPLES: usize = 10_000;

impl MaterialFunctions {
    /// Builds the family from polynomial coefficients. `G` is the primitive
    /// of `g` shifted so that its minimum over the real line is zero.
    pub fn from_polynomials(
        name: &str,
        g: Polynomial,
        alpha: Polynomial,
        alpha0: Polynomial,
    ) -> Result<Self> {
        let prim = g.primitive();
        let min = prim.global_min().ok_or_else(|| {
            Error::Assumption("g has no non-negative primitive (G unbounded below)".into())
        })?;
        let big_g = prim.shifted(-min);
        let alpha_prime = alpha.derivative();
        let alpha_second = alpha_prime.derivative();
        Ok(MaterialFunctions {
            name: name.to_string(),
            g_prime: g.derivative().to_fn(),
            g: g.to_fn(),
            big_g: big_g.to_fn(),
            alpha: alpha.to_fn(),
            alpha_prime: alpha_prime.to_fn(),
            alpha_second: alpha_second.to_fn(),
            alpha0: alpha0.to_fn(),
            delta_star: None,
        })
    }

    /// Builds the family from arbitrary callables; missing second-order
    /// information is obtained by central differences.
    pub fn from_callables(
        name: &str,
        g: ScalarFn,
        big_g: ScalarFn,
        alpha: ScalarFn,
        alpha_prime: ScalarFn,
        alpha0: ScalarFn,
    ) -> Self {
        MaterialFunctions {
            name: name.to_string(),
            g_prime: ScalarFn::derivative_of(&g),
            g,
            big_g,
            alpha_second: ScalarFn::derivative_of(&alpha_prime),
            alpha,
            alpha_prime,
            alpha0,
            delta_star: None,
        }
    }

    pub fn with_delta_star(mut self, d: f64) -> Self {
        self.delta_star = Some(d);
        self
    }

    /// Lower bound of `alpha0` on `[-m, m]`: the declared value if any,
    /// otherwise the sampled minimum.
    pub fn delta_star_on(&self, m: f64) -> f64 {
        if let Some(d) = self.delta_star {
            return d;
        }
        sample_points(m)
            .map(|x| self.alpha0.eval(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the sampled forms of the structural assumptions on `[-m, m]`.
    pub fn validate(&self, m: f64, delta_star: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::Assumption(msg));
        let a0 = self.alpha_prime.eval(0.0);
        if a0.abs() > 1e-12 {
            return fail(format!("alpha'(0) = {a0}, expected 0"));
        }
        let h_conv = 2.0 * m / VALIDATION_SAMPLES as f64;
        for x in sample_points(m) {
            let big_g = self.big_g.eval(x);
            if !(big_g >= -1e-12) {
                return fail(format!("G({x}) = {big_g} is negative"));
            }
            let h = 1e-5 * (1.0 + x.abs());
            let fd = (self.big_g.eval(x + h) - self.big_g.eval(x - h)) / (2.0 * h);
            let gx = self.g.eval(x);
            if (fd - gx).abs() > 1e-6 * (1.0 + gx.abs()) {
                return fail(format!("G' = {fd} differs from g = {gx} at {x}"));
            }
            let ax = self.alpha.eval(x);
            if !(ax >= -1e-12) {
                return fail(format!("alpha({x}) = {ax} is negative"));
            }
            let second = self.alpha.eval(x - h_conv) - 2.0 * ax + self.alpha.eval(x + h_conv);
            if second < -1e-10 * (1.0 + ax.abs()) {
                return fail(format!("alpha is not convex near {x}"));
            }
            let a0x = self.alpha0.eval(x);
            if !(a0x >= delta_star - 1e-12) {
                return fail(format!("alpha0({x}) = {a0x} is below delta_star = {delta_star}"));
            }
        }
        Ok(())
    }
}

/// `VALIDATION_SAMPLES + 1` equispaced points on `[-m, m]`.
pub(crate) fn sample_points(m: f64) -> impl Iterator<Item = f64> {
    let n = VALIDATION_SAMPLES;
    (0..=n).map(move |i| -m + 2.0 * m * i as f64 / n as f64)
}

pub const PRESETS: &[&str] = &["default", "flat-mobility"];

/// Named parameter sets. Both use `g(r) = r - 1` and `alpha(r) = r^2`;
/// `default` has `alpha0(r) = 1 + r^2`, `flat-mobility` has `alpha0 = 1`.
pub fn preset(name: &str) -> Result<(ModelConstants, MaterialFunctions)> {
    let alpha0 = match name {
        "default" => Polynomial::new(vec![1.0, 0.0, 1.0]),
        "flat-mobility" => Polynomial::new(vec![1.0]),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    let funcs = MaterialFunctions::from_polynomials(
        name,
        Polynomial::new(vec![-1.0, 1.0]),
        Polynomial::new(vec![0.0, 0.0, 1.0]),
        alpha0,
    )?
    .with_delta_star(1.0);
    let constants = ModelConstants::new(0.5, 0.5, 0.0, 0.5, 0.01, 1.0)?;
    Ok((constants, funcs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_calculus() {
        let p = Polynomial::new(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative().coeffs(), &[-2.0, 6.0]);
        assert_eq!(p.primitive().coeffs(), &[0.0, 1.0, -1.0, 1.0]);
        assert_eq!(Polynomial::new(vec![2.0, 0.0, 0.0]).degree(), 0);
    }

    #[test]
    fn polynomial_minimum() {
        // (r - 1)^2 / 2 - 1/2 = r^2/2 - r
        let p = Polynomial::new(vec![0.0, -1.0, 0.5]);
        assert!((p.global_min().unwrap() + 0.5).abs() < 1e-14);
        // (r^2 - 1)^2 / 4 - 1/4 = r^4/4 - r^2/2
        let q = Polynomial::new(vec![0.0, 0.0, -0.5, 0.0, 0.25]);
        assert!((q.global_min().unwrap() + 0.25).abs() < 1e-14);
        assert!(Polynomial::new(vec![0.0, 1.0]).global_min().is_none());
        assert!(Polynomial::new(vec![0.0, 0.0, -1.0]).global_min().is_none());
    }

    #[test]
    fn default_preset() {
        let (c, f) = preset("default").unwrap();
        assert_eq!(f.alpha_prime.eval(0.0), 0.0);
        assert_eq!(f.big_g.eval(1.0), 0.0);
        assert!((f.big_g.eval(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(f.alpha0.eval(2.0), 5.0);
        assert_eq!(c.delta_star, 1.0);
        f.validate(3.0, 1.0).unwrap();
    }

    #[test]
    fn flat_mobility_preset() {
        let (c, f) = preset("flat-mobility").unwrap();
        assert_eq!(c.delta_star, 1.0);
        assert_eq!(f.delta_star_on(10.0), 1.0);
        assert_eq!(f.alpha0.eval(-4.0), 1.0);
        f.validate(2.0, 1.0).unwrap();
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn validation_catches_violations() {
        // alpha'(0) != 0
        let f = MaterialFunctions::from_polynomials(
            "bad",
            Polynomial::new(vec![0.0, 1.0]),
            Polynomial::new(vec![0.0, 1.0, 1.0]),
            Polynomial::new(vec![1.0]),
        )
        .unwrap();
        assert!(f.validate(1.0, 1.0).is_err());
        // alpha0 below delta_star
        let f = MaterialFunctions::from_polynomials(
            "bad",
            Polynomial::new(vec![0.0, 1.0]),
            Polynomial::new(vec![0.0, 0.0, 1.0]),
            Polynomial::new(vec![0.5]),
        )
        .unwrap();
        assert!(f.validate(1.0, 1.0).is_err());
        assert!((f.delta_star_on(1.0) - 0.5).abs() < 1e-15);
        // concave alpha
        let f = MaterialFunctions::from_callables(
            "bad",
            ScalarFn::new(|x| x),
            ScalarFn::new(|x| 0.5 * x * x),
            ScalarFn::new(|x| 1.0 - x * x),
            ScalarFn::new(|x| -2.0 * x),
            ScalarFn::new(|_| 1.0),
        );
        assert!(f.validate(0.5, 1.0).is_err());
        // g with even-degree primitive of negative leading coefficient
        assert!(MaterialFunctions::from_polynomials(
            "bad",
            Polynomial::new(vec![0.0, -1.0]),
            Polynomial::new(vec![0.0]),
            Polynomial::new(vec![1.0]),
        )
        .is_err());
    }

    #[test]
    fn callables_get_finite_difference_derivatives() {
        let f = MaterialFunctions::from_callables(
            "cubic",
            ScalarFn::new(|x| x * x * x - x),
            ScalarFn::new(|x| 0.25 * (x * x - 1.0).powi(2)),
            ScalarFn::new(|x| x * x),
            ScalarFn::new(|x| 2.0 * x),
            ScalarFn::new(|x| 1.0 + x * x),
        );
        assert!((f.g_prime.eval(0.5) - (3.0 * 0.25 - 1.0)).abs() < 1e-8);
        assert!((f.alpha_second.eval(1.3) - 2.0).abs() < 1e-8);
        f.validate(1.5, 1.0).unwrap();
    }
}
