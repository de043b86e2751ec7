//! Reference solution of the fully coupled field/circuit system.
//!
//! Each implicit-Euler step solves for `(a, i_m, x, v_c)` at once:
//!
//! ```text
//! M (a − a_old)/δt + K(a) a − X i_m = 0
//! Xᵀ (a − a_old)/δt − v_c          = 0
//! E(x)(x − x_old)/δt + f(t, x) + P i_m = 0
//! Pᵀ x − v_c                        = 0
//! ```
//!
//! The Newton matrix is reduced by eliminating `Δa` through the sparse
//! factorization of `S = M/δt + ∂(K(a)a)/∂a`, leaving a small dense system
//! in `(Δi_m, Δx, Δv_c)`.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::field::{FieldError, FieldModel};
use crate::mna::MnaSystem;
use crate::solver::{
    check_grid, newton, project_consistent, FieldStepper, NewtonSystem, SolveOptions, SolverError, Waveform,
};

/// All coupled signals on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledTrajectory {
    pub a: Waveform,
    pub i_m: Waveform,
    pub x: Waveform,
    pub v_c: Waveform,
}

#[derive(Clone, Copy)]
struct Layout {
    n: usize,
    m: usize,
    nc: usize,
}

impl Layout {
    fn split(&self, u: &DVector<f64>) -> [DVector<f64>; 4] {
        let Layout { n, m, nc } = *self;
        [
            u.rows(0, n).into_owned(),
            u.rows(n, m).into_owned(),
            u.rows(n + m, nc).into_owned(),
            u.rows(n + m + nc, m).into_owned(),
        ]
    }

    fn join(&self, parts: [&DVector<f64>; 4]) -> DVector<f64> {
        let mut u = DVector::zeros(self.n + 2 * self.m + self.nc);
        let mut off = 0;
        for p in parts {
            u.rows_mut(off, p.len()).copy_from(p);
            off += p.len();
        }
        u
    }
}

struct CoupledStep<'s, 'a> {
    stepper: &'s mut FieldStepper<'a>,
    circuit: &'a MnaSystem,
    opts: &'s SolveOptions,
    reduced_cache: &'s mut Option<(f64, LU<f64, Dyn, Dyn>)>,
    layout: Layout,
    t: f64,
    dt: f64,
    a_old: DVector<f64>,
    x_old: DVector<f64>,
}

impl NewtonSystem for CoupledStep<'_, '_> {
    fn residual(&mut self, u: &DVector<f64>) -> DVector<f64> {
        let [a, i, x, v] = self.layout.split(u);
        let field = self.stepper.model.residual(&a, &self.a_old, self.dt, &i, &v);
        let circuit = self.circuit.implicit_euler_residual(self.t, &x, &self.x_old, self.dt, &i);
        let port = self.circuit.port_voltage(&x) - &v;
        let mut r = DVector::zeros(u.len());
        r.rows_mut(0, field.len()).copy_from(&field);
        r.rows_mut(field.len(), circuit.len()).copy_from(&circuit);
        r.rows_mut(field.len() + circuit.len(), port.len()).copy_from(&port);
        r
    }

    fn solve_linearized(&mut self, u: &DVector<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let Layout { n, m, nc } = self.layout;
        let [a, _, x, _] = self.layout.split(u);
        let model = self.stepper.model;
        let constant = model.is_linear() && self.circuit.is_linear() && self.circuit.has_constant_storage();
        let dt = self.dt;
        let factor = self.stepper.factor(&a, dt)?;
        let s_f1 = factor.solve_s(&rhs.rows(0, n).into_owned());

        let reusable = constant && matches!(self.reduced_cache, Some((h, _)) if (*h - dt).abs() <= 1e-12 * dt);
        if !reusable {
            let mut red = DMatrix::zeros(2 * m + nc, 2 * m + nc);
            red.view_mut((0, 0), (m, m)).copy_from(&(&factor.schur / dt));
            let jc = self.circuit.implicit_euler_jacobian(
                self.t,
                &x,
                &self.x_old,
                dt,
                self.opts.jacobian,
                self.opts.e_linearization,
            );
            let p = self.circuit.port_matrix();
            red.view_mut((m, 0), (nc, m)).copy_from(&p);
            red.view_mut((m, m), (nc, nc)).copy_from(&jc);
            red.view_mut((m + nc, m), (m, nc)).copy_from(&p.transpose());
            for j in 0..m {
                red[(j, m + nc + j)] = -1.0;
                red[(m + nc + j, m + nc + j)] = -1.0;
            }
            *self.reduced_cache = Some((dt, red.lu()));
        }
        let mut b = DVector::zeros(2 * m + nc);
        b.rows_mut(0, m).copy_from(&(rhs.rows(n, m) - model.coupling().tr_mul(&s_f1) / dt));
        b.rows_mut(m, nc + m).copy_from(&rhs.rows(n + m, nc + m));
        let sol = self.reduced_cache.as_ref()?.1.solve(&b)?;
        let di = sol.rows(0, m).into_owned();
        let da = s_f1 + factor.s_inv_x() * &di;
        let mut out = DVector::zeros(u.len());
        out.rows_mut(0, n).copy_from(&da);
        out.rows_mut(n, 2 * m + nc).copy_from(&sol);
        Some(out)
    }
}

/// Consistent initial coupled state: coil currents from the field, then
/// the circuit projected onto its algebraic constraints.
pub fn consistent_initial_state(
    field: &FieldModel,
    circuit: &MnaSystem,
    t0: f64,
    x0: &DVector<f64>,
    a0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<(DVector<f64>, DVector<f64>), SolverError> {
    if field.coil_count() != circuit.port_count() || a0.len() != field.dofs() || x0.len() != circuit.dim() {
        return Err(FieldError::DimensionMismatch(format!(
            "field has {} coils and {} dofs (a0: {}); circuit has {} ports and {} unknowns (x0: {})",
            field.coil_count(),
            field.dofs(),
            a0.len(),
            circuit.port_count(),
            circuit.dim(),
            x0.len()
        ))
        .into());
    }
    let i0 = field.initial_current(a0, &circuit.port_voltage(x0))?;
    let x = project_consistent(circuit, t0, x0, &i0, opts)?;
    Ok((x, i0))
}

/// Implicit Euler on the coupled system over `grid`.
pub fn solve_monolithic(
    field: &FieldModel,
    circuit: &MnaSystem,
    x0: &DVector<f64>,
    a0: &DVector<f64>,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<CoupledTrajectory, SolverError> {
    opts.validate()?;
    check_grid(grid)?;
    let (x0, i0) = consistent_initial_state(field, circuit, grid[0], x0, a0, opts)?;
    let layout = Layout { n: field.dofs(), m: field.coil_count(), nc: circuit.dim() };
    let v0 = circuit.port_voltage(&x0);
    let mut u = layout.join([a0, &i0, &x0, &v0]);
    let mut samples = vec![u.clone()];
    let mut stepper = FieldStepper::new(field);
    let mut reduced = None;
    for (k, w) in grid.windows(2).enumerate() {
        let [a_old, _, x_old, _] = layout.split(&u);
        let mut step = CoupledStep {
            stepper: &mut stepper,
            circuit,
            opts,
            reduced_cache: &mut reduced,
            layout,
            t: w[1],
            dt: w[1] - w[0],
            a_old,
            x_old,
        };
        let sol = newton(&mut step, u.clone(), opts.newton())
            .map_err(|e| SolverError::from_newton(e, "coupled", k + 1, w[1]))?;
        u = sol.x;
        samples.push(u.clone());
    }
    let parts: Vec<[DVector<f64>; 4]> = samples.iter().map(|s| layout.split(s)).collect();
    let wave = |c: usize| Waveform::new(grid.to_vec(), parts.iter().map(|p| p[c].clone()).collect());
    Ok(CoupledTrajectory { a: wave(0)?, i_m: wave(1)?, x: wave(2)?, v_c: wave(3)? })
}
