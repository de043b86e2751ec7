//! Implicit-Euler integration of the field and circuit subsystems.

mod circuit;
mod field;
mod newton;
mod waveform;

pub use circuit::{integrate_circuit, project_consistent, CircuitIntegrator, CircuitTrajectory};
pub(crate) use field::FieldStepper;
pub use field::{integrate_field, FieldIntegrator, FieldTrajectory};
pub use newton::{newton, NewtonError, NewtonOptions, NewtonSolution, NewtonSystem, MAX_HALVINGS};
pub use waveform::{uniform_grid, Waveform};

use thiserror::Error;

use crate::field::FieldError;
use crate::mna::{ELinearization, JacobianMode};

/// Largest algebraic residual accepted for initial values.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),
    #[error(
        "{subsystem} Newton failed at step {step} (t = {time}): residual {residual:e} after {iterations} iterations"
    )]
    NonConvergence { subsystem: &'static str, step: usize, time: f64, residual: f64, iterations: usize },
    #[error("{subsystem} Newton matrix singular at step {step} (t = {time})")]
    Singular { subsystem: &'static str, step: usize, time: f64 },
    #[error("inconsistent initial values: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

impl SolverError {
    pub(crate) fn from_newton(e: NewtonError, subsystem: &'static str, step: usize, time: f64) -> Self {
        match e {
            NewtonError::NonConvergence { residual, iterations, .. } => {
                SolverError::NonConvergence { subsystem, step, time, residual, iterations }
            }
            NewtonError::SingularMatrix => SolverError::Singular { subsystem, step, time },
        }
    }
}

/// Per-subsystem integration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub jacobian: JacobianMode,
    pub e_linearization: ELinearization,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            dt: 1e-2,
            newton_tol: 1e-10,
            newton_max: 25,
            jacobian: JacobianMode::Auto,
            e_linearization: ELinearization::Auto,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SolverError::InvalidOptions(format!("step size {} must be positive", self.dt)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(SolverError::InvalidOptions("newton_tol must be positive".into()));
        }
        if self.newton_max == 0 {
            return Err(SolverError::InvalidOptions("newton_max must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn newton(&self) -> NewtonOptions {
        NewtonOptions { tol: self.newton_tol, max_iter: self.newton_max }
    }
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<(), SolverError> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|t| !t.is_finite()) {
        return Err(SolverError::InvalidOptions("grid needs at least two strictly increasing times".into()));
    }
    Ok(())
}
