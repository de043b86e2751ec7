use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;

use super::{check_grid, newton, NewtonSystem, SolveOptions, SolverError, Waveform};
use crate::field::{FieldError, FieldModel};

/// Factorization of one implicit-Euler step matrix
/// `[S, −X; Xᵀ/δt, 0]` with `S = M/δt + ∂(K(a)a)/∂a`, by the Schur
/// complement `Z = Xᵀ S⁻¹ X`.
pub(crate) struct StepFactor {
    dt: f64,
    chol: Option<CscCholesky<f64>>,
    /// `S⁻¹ X`.
    y: DMatrix<f64>,
    z: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Schur complement `Xᵀ S⁻¹ X`.
    pub(crate) schur: DMatrix<f64>,
}

impl StepFactor {
    pub(crate) fn solve_s(&self, r: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(c) => c.solve(r).column(0).into_owned(),
            None => DVector::zeros(0),
        }
    }

    /// `S⁻¹ X`.
    pub(crate) fn s_inv_x(&self) -> &DMatrix<f64> {
        &self.y
    }
}

/// Builds and caches step factorizations. Linear models with a fixed step
/// size are factored once.
pub(crate) struct FieldStepper<'a> {
    pub(crate) model: &'a FieldModel,
    factor: Option<StepFactor>,
}

impl<'a> FieldStepper<'a> {
    pub(crate) fn new(model: &'a FieldModel) -> Self {
        FieldStepper { model, factor: None }
    }

    /// Factorization at `a`, reused when still valid.
    pub(crate) fn factor(&mut self, a: &DVector<f64>, dt: f64) -> Option<&StepFactor> {
        let reusable = self.model.is_linear() && self.factor.as_ref().is_some_and(|f| (f.dt - dt).abs() <= 1e-12 * dt);
        if !reusable {
            self.factor = build_factor(self.model, a, dt);
        }
        self.factor.as_ref()
    }
}

fn build_factor(model: &FieldModel, a: &DVector<f64>, dt: f64) -> Option<StepFactor> {
    let n = model.dofs();
    let x = model.coupling();
    if n == 0 {
        let z = DMatrix::zeros(x.ncols(), x.ncols());
        return Some(StepFactor { dt, chol: None, y: DMatrix::zeros(0, x.ncols()), z: z.clone().lu(), schur: z });
    }
    let s = model.mass() / dt + model.stiffness_jacobian(a);
    let chol = CscCholesky::factor(&s).ok()?;
    let y = chol.solve(x);
    let schur = x.tr_mul(&y);
    let z = schur.clone().lu();
    if schur.ncols() > 0 && !z.is_invertible() {
        return None;
    }
    Some(StepFactor { dt, chol: Some(chol), y, z, schur })
}

struct FieldStep<'s, 'a> {
    stepper: &'s mut FieldStepper<'a>,
    a_old: DVector<f64>,
    dt: f64,
    v_c: DVector<f64>,
}

impl NewtonSystem for FieldStep<'_, '_> {
    fn residual(&mut self, u: &DVector<f64>) -> DVector<f64> {
        let model = self.stepper.model;
        let n = model.dofs();
        let a = u.rows(0, n).into_owned();
        let i = u.rows(n, model.coil_count()).into_owned();
        model.residual(&a, &self.a_old, self.dt, &i, &self.v_c)
    }

    fn solve_linearized(&mut self, u: &DVector<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let model = self.stepper.model;
        let (n, m) = (model.dofs(), model.coil_count());
        let a = u.rows(0, n).into_owned();
        let dt = self.dt;
        let f = self.stepper.factor(&a, dt)?;
        let r1 = rhs.rows(0, n).into_owned();
        let r2 = rhs.rows(n, m).into_owned();
        let s_r1 = f.solve_s(&r1);
        let di = f.z.solve(&(r2 * dt - model.coupling().tr_mul(&s_r1)))?;
        let da = s_r1 + &f.y * &di;
        let mut out = DVector::zeros(n + m);
        out.rows_mut(0, n).copy_from(&da);
        out.rows_mut(n, m).copy_from(&di);
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    pub a: Waveform,
    pub i_m: Waveform,
}

/// Integrates the field subsystem for given coil voltages. Keeps its step
/// factorization between calls, which pays off across WR sweeps.
pub struct FieldIntegrator<'a> {
    stepper: FieldStepper<'a>,
}

impl<'a> FieldIntegrator<'a> {
    pub fn new(model: &'a FieldModel) -> Self {
        FieldIntegrator { stepper: FieldStepper::new(model) }
    }

    pub fn integrate(
        &mut self,
        v_c: &Waveform,
        a0: &DVector<f64>,
        grid: &[f64],
        opts: &SolveOptions,
    ) -> Result<FieldTrajectory, SolverError> {
        opts.validate()?;
        check_grid(grid)?;
        let model = self.stepper.model;
        let (n, m) = (model.dofs(), model.coil_count());
        if a0.len() != n || v_c.dim() != m {
            return Err(FieldError::DimensionMismatch(format!(
                "a0 has {} entries and v_c {} components; model has {n} dofs and {m} coils",
                a0.len(),
                v_c.dim()
            ))
            .into());
        }
        let i0 = model.initial_current(a0, &v_c.eval(grid[0]))?;
        let mut a_samples = vec![a0.clone()];
        let mut i_samples = vec![i0.clone()];
        let mut u = DVector::zeros(n + m);
        u.rows_mut(0, n).copy_from(a0);
        u.rows_mut(n, m).copy_from(&i0);
        for (k, w) in grid.windows(2).enumerate() {
            let mut step = FieldStep {
                stepper: &mut self.stepper,
                a_old: u.rows(0, n).into_owned(),
                dt: w[1] - w[0],
                v_c: v_c.eval(w[1]),
            };
            let sol = newton(&mut step, u.clone(), opts.newton())
                .map_err(|e| SolverError::from_newton(e, "field", k + 1, w[1]))?;
            u = sol.x;
            a_samples.push(u.rows(0, n).into_owned());
            i_samples.push(u.rows(n, m).into_owned());
        }
        Ok(FieldTrajectory {
            a: Waveform::new(grid.to_vec(), a_samples)?,
            i_m: Waveform::new(grid.to_vec(), i_samples)?,
        })
    }
}

/// One-shot [`FieldIntegrator::integrate`].
pub fn integrate_field(
    model: &FieldModel,
    v_c: &Waveform,
    a0: &DVector<f64>,
    grid: &[f64],
    opts: &SolveOptions,
) -> Result<FieldTrajectory, SolverError> {
    FieldIntegrator::new(model).integrate(v_c, a0, grid, opts)
}
