//! Run configuration.
//!
//! The file is TOML: `key = value` lines grouped under `[section]` headers.
//!
//! ```toml
//! [grid]
//! dim = 1
//! lengths = [1.0]
//! cells = [64]
//!
//! [model]
//! preset = "default"        # or g / alpha / alpha0 coefficient lists
//! tau = 0.01
//! t_final = 0.5
//!
//! [initial]
//! eta = { kind = "sinusoidal", offset = 1.0, amplitude = 0.2, wavenumber = [2.0] }
//! theta = { kind = "sinusoidal", amplitude = 1.0, wavenumber = [1.0] }
//!
//! [forcing]                 # optional; omitted terms are zero
//! u = { kind = "constant", value = 0.1 }
//! u_bound = 0.1
//!
//! [output]                  # optional
//! dir = "out"
//! snapshot_stride = 10
//! studies = ["tau", "eps"]
//!
//! [tolerances]              # optional overrides
//! tol_inner = 1e-10
//! ```
//!
//! Field expressions take one of the forms
//!
//! * `{ kind = "constant", value }`
//! * `{ kind = "linear", value, slope = [..] }`: `value + slope . x`
//! * `{ kind = "sinusoidal", offset, amplitude, wavenumber = [..], function }`:
//!   `offset + amplitude * f(pi * wavenumber . x)` with `f` = `"sin"` (default)
//!   or `"cos"`
//! * `{ kind = "tabulated", file }`: nodal values in snapshot format, path
//!   relative to the config file
//!
//! Forcing terms may be modulated in time by `cos(omega t)` through
//! `u_omega` / `v_omega`; tabulated forcing is constant in time.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use kwc_core::model::{choose_truncation_level, Polynomial, PRESETS};
use kwc_core::stepper::ThetaSolver;
use kwc_core::{
    preset, Field, Forcing, ForcingTerm, Grid, MaterialFunctions, ModelConstants, Problem, Tolerances,
};
use serde::{Deserialize, Serialize};

use crate::output::read_snapshot;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: Option<usize>, message: impl Into<String>) -> Self {
        ConfigError {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Coefficients of `g`, lowest degree first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trig {
    #[default]
    Sin,
    Cos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FieldExpr {
    Constant {
        value: f64,
    },
    Linear {
        value: f64,
        slope: Vec<f64>,
    },
    Sinusoidal {
        #[serde(default)]
        offset: f64,
        amplitude: f64,
        wavenumber: Vec<f64>,
        #[serde(default)]
        function: Trig,
    },
    Tabulated {
        file: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub eta: FieldExpr,
    pub theta: FieldExpr,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<FieldExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<FieldExpr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyName {
    Tau,
    Eps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Write a snapshot every `snapshot_stride` steps; 0 keeps only the
    /// initial and final states.
    #[serde(default)]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub studies: Vec<StudyName>,
}

fn default_dir() -> String {
    "out".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            snapshot_stride: 0,
            studies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverName {
    DualGradient,
    ChambollePock,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_inner: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_maxprin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_solver: Option<SolverName>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    #[serde(skip)]
    source: String,
}

// the source text only serves error locations
impl PartialEq for RunConfig {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.model == other.model
            && self.initial == other.initial
            && self.forcing == other.forcing
            && self.output == other.output
            && self.tolerances == other.tolerances
            && self.base_dir == other.base_dir
    }
}

/// A validated configuration together with the problem it describes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub problem: Problem,
}

pub fn parse_config(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::at(None, format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = RunConfig::parse(&src, &base)?;
    let problem = config.build()?;
    Ok(LoadedConfig { config, problem })
}

/// 1-based line of the byte offset `pos`.
fn line_of(src: &str, pos: usize) -> usize {
    src[..pos.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line on which `key` is assigned inside `[section]`, also matching dotted
/// subtables such as `[initial.eta]` for `key = "eta"`.
fn locate_key(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            if current == format!("{section}.{key}") {
                return Some(i + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim() == key {
                return Some(i + 1);
            }
        }
    }
    None
}

impl RunConfig {
    /// Parses and checks the file contents without building the problem.
    pub fn parse(src: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| line_of(src, s.start));
            ConfigError::at(line, e.message().trim().to_string())
        })?;
        config.base_dir = base_dir.to_path_buf();
        config.source = src.to_string();
        config.check()?;
        Ok(config)
    }

    /// Serialises back to the file format.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::at(locate_key(&self.source, section, key), message)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        let custom = [&m.g, &m.alpha, &m.alpha0].iter().filter(|p| p.is_some()).count();
        match (&m.preset, custom) {
            (Some(_), 0) => {}
            (Some(_), _) => {
                return Err(self.err("model", "preset", "give either a preset or polynomial coefficients, not both"))
            }
            (None, 3) => {}
            (None, _) => {
                return Err(ConfigError::at(
                    locate_key(&self.source, "model", "g").or_else(|| locate_key(&self.source, "model", "alpha")),
                    "[model] needs `preset` or all of `g`, `alpha`, `alpha0`",
                ))
            }
        }
        if let Some(name) = &m.preset {
            if !PRESETS.contains(&name.as_str()) {
                return Err(self.err(
                    "model",
                    "preset",
                    format!("unknown preset `{name}` (known: {})", PRESETS.join(", ")),
                ));
            }
        }
        let positive = [("mu", m.mu), ("nu", m.nu), ("tau", m.tau), ("delta_star", m.delta_star)];
        for (key, v) in positive {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(self.err("model", key, format!("assumption violated: {key} must be positive, got {v}")));
                }
            }
        }
        for (key, v) in [("eps", m.eps), ("t_final", m.t_final)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(self.err("model", key, format!("assumption violated: {key} must be >= 0, got {v}")));
                }
            }
        }
        for (key, p) in [("g", &m.g), ("alpha", &m.alpha), ("alpha0", &m.alpha0)] {
            if let Some(c) = p {
                if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                    return Err(self.err("model", key, format!("{key} needs finite coefficients")));
                }
            }
        }
        let f = &self.forcing;
        match (&f.u, f.u_bound) {
            (Some(_), None) => return Err(self.err("forcing", "u", "forcing `u` needs a declared `u_bound`")),
            (_, Some(b)) if !(b.is_finite() && b >= 0.0) => {
                return Err(self.err("forcing", "u_bound", format!("u_bound must be finite and >= 0, got {b}")))
            }
            _ => {}
        }
        for (key, term, omega) in [("u", &f.u, f.u_omega), ("v", &f.v, f.v_omega)] {
            if let Some(w) = omega {
                if !w.is_finite() {
                    return Err(self.err("forcing", &format!("{key}_omega"), "omega must be finite"));
                }
                if matches!(term, Some(FieldExpr::Tabulated { .. })) {
                    return Err(self.err("forcing", &format!("{key}_omega"), "tabulated forcing is constant in time"));
                }
            }
        }
        let t = &self.tolerances;
        for (key, v) in [("tol_inner", t.tol_inner), ("tol_energy", t.tol_energy), ("tol_maxprin", t.tol_maxprin)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(self.err("tolerances", key, format!("{key} must be positive, got {v}")));
                }
            }
        }
        if t.theta_max_iter == Some(0) {
            return Err(self.err("tolerances", "theta_max_iter", "theta_max_iter must be positive"));
        }
        Ok(())
    }

    fn build_grid(&self) -> Result<Arc<Grid>, ConfigError> {
        let g = &self.grid;
        Grid::new(g.dim, &g.lengths, &g.cells)
            .map(Arc::new)
            .map_err(|e| self.err("grid", "cells", e.to_string()))
    }

    fn field(&self, grid: &Arc<Grid>, expr: &FieldExpr, section: &str, key: &str) -> Result<Field, ConfigError> {
        let fail = |msg: String| self.err(section, key, msg);
        let dim = grid.dim();
        let check_len = |name: &str, v: &[f64]| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(fail(format!("`{name}` needs {dim} entries, got {}", v.len())))
            }
        };
        let field = match expr {
            FieldExpr::Tabulated { file } => {
                let path = self.base_dir.join(file);
                let snap = read_snapshot(&path).map_err(|e| fail(format!("{}: {e}", path.display())))?;
                return snap.to_field(grid).map_err(|e| fail(format!("{}: {e}", path.display())));
            }
            FieldExpr::Linear { slope, .. } => {
                check_len("slope", slope)?;
                Field::from_fn(grid.clone(), |x| profile(expr, x))
            }
            FieldExpr::Sinusoidal { wavenumber, .. } => {
                check_len("wavenumber", wavenumber)?;
                Field::from_fn(grid.clone(), |x| profile(expr, x))
            }
            FieldExpr::Constant { .. } => Field::from_fn(grid.clone(), |x| profile(expr, x)),
        };
        field.map_err(|e| fail(e.to_string()))
    }

    fn forcing_term(
        &self,
        grid: &Arc<Grid>,
        expr: &Option<FieldExpr>,
        omega: Option<f64>,
        key: &str,
    ) -> Result<ForcingTerm, ConfigError> {
        let Some(expr) = expr else {
            return Ok(ForcingTerm::Zero);
        };
        // builds the nodal field once to validate the expression
        let f = self.field(grid, expr, "forcing", key)?;
        if let FieldExpr::Tabulated { .. } = expr {
            return Ok(ForcingTerm::Tabulated(f.into_values()));
        }
        let expr = expr.clone();
        let omega = omega.unwrap_or(0.0);
        Ok(ForcingTerm::analytic(move |t, x| profile(&expr, x) * (omega * t).cos()))
    }

    pub fn material(&self) -> Result<(ModelConstants, MaterialFunctions), ConfigError> {
        let m = &self.model;
        let (base, funcs) = match &m.preset {
            Some(name) => preset(name).map_err(|e| self.err("model", "preset", e.to_string()))?,
            None => {
                let poly = |c: &Option<Vec<f64>>| Polynomial::new(c.clone().unwrap_or_default());
                let funcs = MaterialFunctions::from_polynomials("custom", poly(&m.g), poly(&m.alpha), poly(&m.alpha0))
                    .map_err(|e| self.err("model", "g", e.to_string()))?;
                let (c, _) = preset("default").expect("default preset exists");
                (c, funcs)
            }
        };
        let constants = ModelConstants::new(
            m.mu.unwrap_or(base.mu),
            m.nu.unwrap_or(base.nu),
            m.eps.unwrap_or(base.eps),
            m.t_final.unwrap_or(base.t_final),
            m.tau.unwrap_or(base.tau),
            base.delta_star,
        )
        .map_err(|e| self.err("model", "mu", e.to_string()))?;
        Ok((constants, funcs))
    }

    /// Builds the problem; the truncation level is selected here.
    pub fn build(&self) -> Result<Problem, ConfigError> {
        let grid = self.build_grid()?;
        let eta0 = self.field(&grid, &self.initial.eta, "initial", "eta")?;
        let theta0 = self.field(&grid, &self.initial.theta, "initial", "theta")?;
        let f = &self.forcing;
        let forcing = Forcing::new(
            self.forcing_term(&grid, &f.u, f.u_omega, "u")?,
            self.forcing_term(&grid, &f.v, f.v_omega, "v")?,
            f.u_bound.unwrap_or(0.0),
        );
        let (mut constants, mut funcs) = self.material()?;
        let model_line = if self.model.preset.is_some() { "preset" } else { "g" };
        let delta_star = match (self.model.delta_star, funcs.delta_star) {
            (Some(d), _) => Some(d),
            (None, Some(d)) => Some(d),
            (None, None) => None,
        };
        let delta_star = match delta_star {
            Some(d) => d,
            None => {
                let level = choose_truncation_level(eta0.inf_norm(), forcing.u_inf_bound, &funcs.g)
                    .map_err(|e| self.err("model", model_line, e.to_string()))?;
                let d = funcs.delta_star_on(level.m);
                if !(d > 0.0) {
                    return Err(self.err(
                        "model",
                        "alpha0",
                        format!("assumption violated: alpha0 has minimum {d} on [-M, M], expected > 0"),
                    ));
                }
                d
            }
        };
        funcs = funcs.with_delta_star(delta_star);
        constants = ModelConstants::new(
            constants.mu,
            constants.nu,
            constants.eps,
            constants.t_final,
            constants.tau,
            delta_star,
        )
        .map_err(|e| self.err("model", "delta_star", e.to_string()))?;
        let problem = Problem::new(constants, funcs, eta0, theta0, forcing)
            .map_err(|e| self.err("model", model_line, e.to_string()))?;
        Ok(problem.with_tolerances(self.tolerances()))
    }

    pub fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        let t = &self.tolerances;
        Tolerances {
            tol_inner: t.tol_inner.unwrap_or(d.tol_inner),
            tol_energy: t.tol_energy.unwrap_or(d.tol_energy),
            tol_maxprin: t.tol_maxprin.unwrap_or(d.tol_maxprin),
            theta_max_iter: t.theta_max_iter.unwrap_or(d.theta_max_iter),
            theta_solver: match t.theta_solver {
                Some(SolverName::ChambollePock) => ThetaSolver::ChambollePock,
                Some(SolverName::DualGradient) => ThetaSolver::DualGradient,
                None => d.theta_solver,
            },
            ..d
        }
    }
}

/// Value of an analytic expression at `x`; tabulated expressions never
/// reach this point.
fn profile(expr: &FieldExpr, x: &[f64]) -> f64 {
    match expr {
        FieldExpr::Constant { value } => *value,
        FieldExpr::Linear { value, slope } => value + x.iter().zip(slope).map(|(a, b)| a * b).sum::<f64>(),
        FieldExpr::Sinusoidal {
            offset,
            amplitude,
            wavenumber,
            function,
        } => {
            let arg = PI * x.iter().zip(wavenumber).map(|(a, k)| a * k).sum::<f64>();
            offset
                + amplitude
                    * match function {
                        Trig::Sin => arg.sin(),
                        Trig::Cos => arg.cos(),
                    }
        }
        FieldExpr::Tabulated { .. } => unreachable!("tabulated forcing is handled separately"),
    }
}
