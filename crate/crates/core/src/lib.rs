//! Implicit time discretisation of the pseudo-parabolic
//! Kobayashi–Warren–Carter system for grain-boundary motion, with energy
//! diagnostics and numerical studies of the scheme.

pub mod analysis;
pub mod energy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod stepper;

pub use energy::{check_interval_inequality, check_step_inequality, eval_energy, EnergyReport};
pub use error::{Error, Result};
pub use grid::{build_grid, Field, Grid, VectorField};
pub use model::{
    choose_truncation, gamma_eps, gamma_eps_conjugate, preset, Forcing, ForcingTerm, MaterialFunctions,
    ModelConstants, TruncationBundle,
};
pub use stepper::{run, Interpolation, Problem, RunResult, StepState, Stepper, Tolerances};
