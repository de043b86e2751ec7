use nalgebra::DVector;
use thiserror::Error;

/// Maximum number of step halvings per Newton iteration.
pub const MAX_HALVINGS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { x: DVector<f64>, residual: f64, iterations: usize },
    #[error("singular Newton matrix")]
    SingularMatrix,
}

/// A nonlinear system `r(x) = 0` together with a solver for its linearization.
pub trait NewtonSystem {
    fn residual(&mut self, x: &DVector<f64>) -> DVector<f64>;
    /// Solves `J(x) δ = rhs`; `None` when `J(x)` is singular.
    fn solve_linearized(&mut self, x: &DVector<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton: stops once `‖r‖₂ ≤ tol · (1 + ‖r₀‖₂)`, or once a full
/// Newton correction is below `tol · (1 + ‖x‖₂)`, which is where rounding
/// in an ill-conditioned system keeps the residual from shrinking further.
pub fn newton(
    sys: &mut impl NewtonSystem,
    guess: DVector<f64>,
    opts: NewtonOptions,
) -> Result<NewtonSolution, NewtonError> {
    let mut x = guess;
    let mut r = sys.residual(&x);
    let mut norm = r.norm();
    let target = opts.tol * (1.0 + norm);
    let mut iterations = 0;
    while !(norm <= target) {
        if iterations == opts.max_iter || !norm.is_finite() {
            return Err(NewtonError::NonConvergence { x, residual: norm, iterations });
        }
        let step = sys.solve_linearized(&x, &r).ok_or(NewtonError::SingularMatrix)?;
        if step.iter().any(|v| !v.is_finite()) {
            return Err(NewtonError::SingularMatrix);
        }
        if step.norm() <= opts.tol * (1.0 + x.norm()) {
            x -= &step;
            let residual = sys.residual(&x).norm();
            return Ok(NewtonSolution { x, iterations: iterations + 1, residual });
        }
        let mut lambda = 1.0;
        let (mut x_new, mut r_new, mut norm_new);
        let mut halvings = 0;
        loop {
            x_new = &x - &step * lambda;
            r_new = sys.residual(&x_new);
            norm_new = r_new.norm();
            if norm_new < norm || halvings == MAX_HALVINGS {
                break;
            }
            lambda *= 0.5;
            halvings += 1;
        }
        iterations += 1;
        if !(norm_new < norm) && halvings == MAX_HALVINGS {
            // No descent along the Newton direction: the iterate cannot improve.
            return Err(NewtonError::NonConvergence { x, residual: norm, iterations });
        }
        x = x_new;
        r = r_new;
        norm = norm_new;
    }
    Ok(NewtonSolution { x, iterations, residual: norm })
}
