use nalgebra::{DMatrix, DVector, Dyn, LU};

use super::{check_grid, newton, NewtonSystem, SolveOptions, SolverError, Waveform, CONSISTENCY_TOL};
use crate::linalg::{left_null_space, lstsq};
use crate::mna::MnaSystem;

/// Moves `x0` within `ker E(x0)` until the algebraic rows of the circuit
/// equations hold at `t0`. Differential components stay fixed.
pub fn project_consistent(
    sys: &MnaSystem,
    t0: f64,
    x0: &DVector<f64>,
    i_m0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<DVector<f64>, SolverError> {
    if x0.len() != sys.dim() || i_m0.len() != sys.port_count() {
        return Err(SolverError::Inconsistent(format!(
            "state has {} entries and {} port currents; circuit needs {} and {}",
            x0.len(),
            i_m0.len(),
            sys.dim(),
            sys.port_count()
        )));
    }
    let e = sys.eval_e(x0);
    let w = left_null_space(&e);
    if w.ncols() == 0 {
        return Ok(x0.clone());
    }
    let free = left_null_space(&e.transpose());
    let algebraic = |x: &DVector<f64>| w.tr_mul(&sys.implicit_euler_residual(t0, x, x, 1.0, i_m0));
    let mut x = x0.clone();
    let mut g = algebraic(&x);
    for _ in 0..opts.newton_max {
        if g.norm() <= 1e-14 * (1.0 + x.norm()) {
            break;
        }
        let j = w.tr_mul(&sys.jacobian_f(t0, &x, opts.jacobian)) * &free;
        let y = lstsq(&j, &g);
        x -= &free * y;
        let g_new = algebraic(&x);
        if !(g_new.norm() < g.norm()) {
            g = g_new;
            break;
        }
        g = g_new;
    }
    if !(g.norm() <= CONSISTENCY_TOL) {
        return Err(SolverError::Inconsistent(format!("algebraic circuit residual {:e} after projection", g.norm())));
    }
    Ok(x)
}

struct CircuitStep<'s> {
    sys: &'s MnaSystem,
    opts: &'s SolveOptions,
    cache: &'s mut Option<(f64, LU<f64, Dyn, Dyn>)>,
    t: f64,
    dt: f64,
    x_prev: DVector<f64>,
    i_m: DVector<f64>,
}

impl NewtonSystem for CircuitStep<'_> {
    fn residual(&mut self, x: &DVector<f64>) -> DVector<f64> {
        self.sys.implicit_euler_residual(self.t, x, &self.x_prev, self.dt, &self.i_m)
    }

    fn solve_linearized(&mut self, x: &DVector<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let constant = self.sys.is_linear() && self.sys.has_constant_storage();
        let jac = || -> DMatrix<f64> {
            self.sys.implicit_euler_jacobian(
                self.t,
                x,
                &self.x_prev,
                self.dt,
                self.opts.jacobian,
                self.opts.e_linearization,
            )
        };
        if !constant {
            return jac().lu().solve(rhs);
        }
        let fresh = !matches!(self.cache, Some((dt, _)) if (*dt - self.dt).abs() <= 1e-12 * self.dt);
        if fresh {
            *self.cache = Some((self.dt, jac().lu()));
        }
        self.cache.as_ref().and_then(|(_, lu)| lu.solve(rhs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTrajectory {
    pub x: Waveform,
    /// `Pᵀ x` on the same grid.
    pub v_c: Waveform,
}

/// Integrates the circuit for given port currents. For linear circuits the
/// Newton matrix is factored once per step size.
pub struct CircuitIntegrator<'a> {
    sys: &'a MnaSystem,
    cache: Option<(f64, LU<f64, Dyn, Dyn>)>,
}

impl<'a> CircuitIntegrator<'a> {
    pub fn new(sys: &'a MnaSystem) -> Self {
        CircuitIntegrator { sys, cache: None }
    }

    pub fn integrate(
        &mut self,
        i_m: &Waveform,
        x0: &DVector<f64>,
        grid: &[f64],
        opts: &SolveOptions,
    ) -> Result<CircuitTrajectory, SolverError> {
        opts.validate()?;
        check_grid(grid)?;
        let sys = self.sys;
        if i_m.dim() != sys.port_count() || x0.len() != sys.dim() {
            return Err(SolverError::Inconsistent(format!(
                "state has {} entries and {} port currents; circuit needs {} and {}",
                x0.len(),
                i_m.dim(),
                sys.dim(),
                sys.port_count()
            )));
        }
        let mut xs = vec![x0.clone()];
        let mut vs = vec![sys.port_voltage(x0)];
        let mut x = x0.clone();
        for (k, w) in grid.windows(2).enumerate() {
            let mut step = CircuitStep {
                sys,
                opts,
                cache: &mut self.cache,
                t: w[1],
                dt: w[1] - w[0],
                x_prev: x.clone(),
                i_m: i_m.eval(w[1]),
            };
            let sol = newton(&mut step, x.clone(), opts.newton())
                .map_err(|e| SolverError::from_newton(e, "circuit", k + 1, w[1]))?;
            x = sol.x;
            vs.push(sys.port_voltage(&x));
            xs.push(x.clone());
        }
        Ok(CircuitTrajectory { x: Waveform::new(grid.to_vec(), xs)?, v_c: Waveform::new(grid.to_vec(), vs)? })
    }
}

/// One-shot [`CircuitIntegrator::integrate`].
pub fn integrate_circuit(
    sys: &MnaSystem,
    i_m: &Waveform,
    x0: &DVector<f64>,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<CircuitTrajectory, SolverError> {
    CircuitIntegrator::new(sys).integrate(i_m, x0, grid, opts)
}
