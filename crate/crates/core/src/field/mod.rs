//! Space-discrete magnetoquasistatic field models.
//!
//! A [`FieldModel`] is the triple `(M, K(·), X)` of
//!
//! ```text
//! M ȧ + K(a) a − X i_m = 0,      Xᵀ ȧ = v_c
//! ```
//!
//! where `a` collects the discrete vector potential, `i_m` the coil currents
//! and `v_c` the induced coil voltages. Models come from the 2D finite
//! element assembler ([`assemble_fe`]), from MatrixMarket files
//! ([`load_matrix_model`]) or from the built-in [`TransformerLite`] geometry.

mod assembly;
mod matrix_market;
mod mesh;
mod transformer;
mod validate;

pub use assembly::{assemble_fe, CoilSpec, FeElement, FeStiffness, Material, MaterialTable, ReluctivityLaw};
pub use matrix_market::{
    load_matrix_model, load_matrix_model_unchecked, read_matrix_market, read_matrix_model, read_matrix_model_unchecked,
    write_matrix_market, write_matrix_model, MatrixModelPaths,
};
pub use mesh::Mesh2D;
pub use transformer::{builtin_config, builtin_model, CoreLaw, TransformerLite, BUILTIN_NAMES};
pub use validate::{validate_assumptions, CheckResult, ValidationOptions, ValidationReport};

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::CscMatrix;
use thiserror::Error;

use crate::linalg::{csc_from_triplets, lstsq, spmv};

/// Vacuum reluctivity `1/μ₀` in m/H.
pub const NU_VACUUM: f64 = 1.0 / (4.0e-7 * std::f64::consts::PI);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("coil `{0}` has an empty region")]
    EmptyCoilRegion(String),
    #[error("model has no degrees of freedom (every vertex is Dirichlet)")]
    NoDegreesOfFreedom,
    #[error("no material for region {0}")]
    UnknownRegion(u32),
    #[error("invalid material for region {region}: {reason}")]
    InvalidMaterial { region: u32, reason: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("M is not symmetric (relative asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("X rank-deficient")]
    RankDeficient,
    #[error("stiffness factorization failed: {0}")]
    Factorization(String),
    #[error("static field solve did not converge (residual {0:e})")]
    NonConvergence(f64),
    #[error("inconsistent initial field state (residual {0:e})")]
    Inconsistent(f64),
    #[error("cannot export a nonlinear stiffness")]
    NonlinearExport,
    #[error("unknown built-in field model `{0}`")]
    UnknownBuiltin(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(String),
}

/// Metadata for one column of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilInfo {
    pub name: String,
    pub turns: f64,
}

#[derive(Debug, Clone)]
pub enum StiffnessKind {
    Linear(CscMatrix<f64>),
    Fe(FeStiffness),
}

/// A diagonal block of the stiffness acting on `a[offset .. offset + dofs]`.
#[derive(Debug, Clone)]
pub struct StiffnessBlock {
    pub offset: usize,
    pub dofs: usize,
    pub kind: StiffnessKind,
}

/// `(M, K(·), X)`. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FieldModel {
    mass: CscMatrix<f64>,
    stiffness: Vec<StiffnessBlock>,
    coupling: DMatrix<f64>,
    coils: Vec<CoilInfo>,
}

impl FieldModel {
    /// Linear model from explicit matrices.
    pub fn linear(
        mass: CscMatrix<f64>,
        stiffness: CscMatrix<f64>,
        coupling: DMatrix<f64>,
        coils: Vec<CoilInfo>,
    ) -> Result<Self, FieldError> {
        let n = mass.nrows();
        let block = StiffnessBlock { offset: 0, dofs: n, kind: StiffnessKind::Linear(stiffness) };
        FieldModel::from_parts(mass, vec![block], coupling, coils)
    }

    pub(crate) fn from_parts(
        mass: CscMatrix<f64>,
        stiffness: Vec<StiffnessBlock>,
        coupling: DMatrix<f64>,
        coils: Vec<CoilInfo>,
    ) -> Result<Self, FieldError> {
        let n = mass.nrows();
        if mass.ncols() != n {
            return Err(FieldError::DimensionMismatch(format!("M is {}x{}", n, mass.ncols())));
        }
        for b in &stiffness {
            if let StiffnessKind::Linear(k) = &b.kind {
                if k.nrows() != b.dofs || k.ncols() != b.dofs {
                    return Err(FieldError::DimensionMismatch(format!(
                        "K is {}x{}, M is {n}x{n}",
                        k.nrows(),
                        k.ncols()
                    )));
                }
            }
        }
        let covered: usize = stiffness.iter().map(|b| b.dofs).sum();
        if covered != n {
            return Err(FieldError::DimensionMismatch(format!("K covers {covered} of {n} dofs")));
        }
        if coupling.nrows() != n {
            return Err(FieldError::DimensionMismatch(format!("X has {} rows, M has {n}", coupling.nrows())));
        }
        if coils.len() != coupling.ncols() {
            return Err(FieldError::DimensionMismatch("one coil record per column of X".into()));
        }
        Ok(FieldModel { mass, stiffness, coupling, coils })
    }

    /// A model without dofs or coils, used when a circuit has no field port.
    pub fn empty() -> Self {
        FieldModel {
            mass: CscMatrix::zeros(0, 0),
            stiffness: Vec::new(),
            coupling: DMatrix::zeros(0, 0),
            coils: Vec::new(),
        }
    }

    pub fn dofs(&self) -> usize {
        self.mass.nrows()
    }

    pub fn coil_count(&self) -> usize {
        self.coupling.ncols()
    }

    pub fn coils(&self) -> &[CoilInfo] {
        &self.coils
    }

    pub fn mass(&self) -> &CscMatrix<f64> {
        &self.mass
    }

    /// `X`.
    pub fn coupling(&self) -> &DMatrix<f64> {
        &self.coupling
    }

    pub fn is_linear(&self) -> bool {
        self.stiffness.iter().all(|b| matches!(b.kind, StiffnessKind::Linear(_)))
    }

    /// Keeps the listed coil columns, in the given order. Coils left out
    /// carry zero current.
    pub fn select_coils(&self, cols: &[usize]) -> Result<FieldModel, FieldError> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.coil_count()) {
            return Err(FieldError::DimensionMismatch(format!("coil {c} requested, model has {}", self.coil_count())));
        }
        let x = DMatrix::from_fn(self.dofs(), cols.len(), |i, j| self.coupling[(i, cols[j])]);
        let coils = cols.iter().map(|&c| self.coils[c].clone()).collect();
        FieldModel::from_parts(self.mass.clone(), self.stiffness.clone(), x, coils)
    }

    /// Block-diagonal union of independent models.
    pub fn block_diag(models: &[FieldModel]) -> FieldModel {
        let n: usize = models.iter().map(FieldModel::dofs).sum();
        let m: usize = models.iter().map(FieldModel::coil_count).sum();
        let mut mass = Vec::new();
        let mut stiffness = Vec::new();
        let mut coupling = DMatrix::zeros(n, m);
        let mut coils = Vec::new();
        let (mut r, mut c) = (0, 0);
        for model in models {
            mass.extend(model.mass.triplet_iter().map(|(i, j, v)| (i + r, j + r, *v)));
            for b in &model.stiffness {
                stiffness.push(StiffnessBlock { offset: b.offset + r, dofs: b.dofs, kind: b.kind.clone() });
            }
            coupling.view_mut((r, c), (model.dofs(), model.coil_count())).copy_from(&model.coupling);
            coils.extend(model.coils.iter().cloned());
            r += model.dofs();
            c += model.coil_count();
        }
        FieldModel { mass: csc_from_triplets(n, n, &mass), stiffness, coupling, coils }
    }

    /// `K(a) a`.
    pub fn stiffness_action(&self, a: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dofs());
        for b in &self.stiffness {
            let sub = a.rows(b.offset, b.dofs).into_owned();
            let y = match &b.kind {
                StiffnessKind::Linear(k) => spmv(k, &sub),
                StiffnessKind::Fe(fe) => fe.action(&sub),
            };
            out.rows_mut(b.offset, b.dofs).copy_from(&y);
        }
        out
    }

    fn assemble_blocks(&self, a: &DVector<f64>, jacobian: bool) -> CscMatrix<f64> {
        let mut trip = Vec::new();
        for b in &self.stiffness {
            let off = b.offset;
            match &b.kind {
                StiffnessKind::Linear(k) => {
                    trip.extend(k.triplet_iter().map(|(i, j, v)| (i + off, j + off, *v)));
                }
                StiffnessKind::Fe(fe) => {
                    let sub = a.rows(off, b.dofs).into_owned();
                    fe.triplets(&sub, jacobian, off, &mut trip);
                }
            }
        }
        csc_from_triplets(self.dofs(), self.dofs(), &trip)
    }

    /// The (secant) matrix `K(a)`.
    pub fn stiffness_matrix(&self, a: &DVector<f64>) -> CscMatrix<f64> {
        self.assemble_blocks(a, false)
    }

    /// `∂(K(a) a)/∂a`.
    pub fn stiffness_jacobian(&self, a: &DVector<f64>) -> CscMatrix<f64> {
        self.assemble_blocks(a, true)
    }

    /// `(M (a_new − a_old)/δt + K(a_new) a_new − X i_m,  Xᵀ (a_new − a_old)/δt − v_c)`.
    pub fn residual(
        &self,
        a_new: &DVector<f64>,
        a_old: &DVector<f64>,
        dt: f64,
        i_m: &DVector<f64>,
        v_c: &DVector<f64>,
    ) -> DVector<f64> {
        let da = (a_new - a_old) / dt;
        let top = spmv(&self.mass, &da) + self.stiffness_action(a_new) - &self.coupling * i_m;
        let bottom = self.coupling.tr_mul(&da) - v_c;
        let mut r = DVector::zeros(self.dofs() + self.coil_count());
        r.rows_mut(0, self.dofs()).copy_from(&top);
        r.rows_mut(self.dofs(), self.coil_count()).copy_from(&bottom);
        r
    }

    /// Magnetostatic state with `K(a) a = X i_m`.
    pub fn static_state(&self, i_m: &DVector<f64>) -> Result<DVector<f64>, FieldError> {
        let rhs = &self.coupling * i_m;
        let mut a = DVector::zeros(self.dofs());
        if self.dofs() == 0 {
            return Ok(a);
        }
        let scale = 1.0 + rhs.norm();
        for _ in 0..50 {
            let r = self.stiffness_action(&a) - &rhs;
            if r.norm() <= 1e-12 * scale {
                return Ok(a);
            }
            let chol = CscCholesky::factor(&self.stiffness_jacobian(&a))
                .map_err(|e| FieldError::Factorization(format!("{e:?}")))?;
            let step = chol.solve(&r);
            a -= step.column(0);
            if self.is_linear() {
                return Ok(a);
            }
        }
        let r = self.stiffness_action(&a) - &rhs;
        Err(FieldError::NonConvergence(r.norm()))
    }

    /// Equivalent inductance matrix `Xᵀ K(0)⁻¹ X` of the linearized,
    /// eddy-current-free model.
    pub fn equivalent_inductance(&self) -> Result<DMatrix<f64>, FieldError> {
        if self.dofs() == 0 {
            return Ok(DMatrix::zeros(self.coil_count(), self.coil_count()));
        }
        let k = self.stiffness_jacobian(&DVector::zeros(self.dofs()));
        let chol = CscCholesky::factor(&k).map_err(|e| FieldError::Factorization(format!("{e:?}")))?;
        let y = chol.solve(&self.coupling);
        Ok(self.coupling.tr_mul(&y))
    }

    /// Dofs whose row of `M` is identically zero; their equations are
    /// algebraic.
    pub fn algebraic_dofs(&self) -> Vec<usize> {
        let mut nonzero = vec![false; self.dofs()];
        for (i, _, v) in self.mass.triplet_iter() {
            if *v != 0.0 {
                nonzero[i] = true;
            }
        }
        (0..self.dofs()).filter(|&i| !nonzero[i]).collect()
    }

    /// Coil currents consistent with `a0`.
    ///
    /// The algebraic rows `K(a0) a0 − X i_m = 0` are solved in the
    /// least-squares sense; a residual above `1e-8 · (1 + ‖K(a0) a0‖)` means
    /// `a0` is not a consistent initial value. Without algebraic rows the
    /// currents follow from `Xᵀ M⁻¹ (X i_m − K(a0) a0) = v_c0`.
    pub fn initial_current(&self, a0: &DVector<f64>, v_c0: &DVector<f64>) -> Result<DVector<f64>, FieldError> {
        let m = self.coil_count();
        if self.dofs() == 0 || m == 0 {
            return Ok(DVector::zeros(m));
        }
        let ka = self.stiffness_action(a0);
        let alg = self.algebraic_dofs();
        if alg.is_empty() {
            let chol = CscCholesky::factor(&self.mass).map_err(|e| FieldError::Factorization(format!("{e:?}")))?;
            let y = chol.solve(&self.coupling);
            let z = chol.solve(&ka);
            let lhs = self.coupling.tr_mul(&y);
            let rhs = v_c0 + self.coupling.tr_mul(&z.column(0));
            return Ok(lstsq(&lhs, &rhs));
        }
        let xa = DMatrix::from_fn(alg.len(), m, |i, j| self.coupling[(alg[i], j)]);
        let ra = DVector::from_iterator(alg.len(), alg.iter().map(|&i| ka[i]));
        let i0 = lstsq(&xa, &ra);
        let res = (&xa * &i0 - &ra).norm();
        if res > 1e-8 * (1.0 + ka.norm()) {
            return Err(FieldError::Inconsistent(res));
        }
        Ok(i0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn one_dof() -> FieldModel {
        FieldModel::linear(
            CscMatrix::zeros(1, 1),
            csc_from_triplets(1, 1, &[(0, 0, 2.0)]),
            DMatrix::from_element(1, 1, 1.0),
            vec![CoilInfo { name: "coil".into(), turns: 1.0 }],
        )
        .unwrap()
    }

    #[test]
    fn stationary_zero_state_has_zero_residual() {
        let f = one_dof();
        let z = DVector::zeros(1);
        assert_eq!(f.residual(&z, &z, 0.1, &z, &z), DVector::zeros(2));
    }

    #[test]
    fn one_dof_step_by_hand() {
        // v_c = 1, δt = 1, a_old = 0: Xᵀ a_new = 1 and 2 a_new = i_m.
        let f = one_dof();
        let r = f.residual(
            &DVector::from_element(1, 1.0),
            &DVector::zeros(1),
            1.0,
            &DVector::from_element(1, 2.0),
            &DVector::from_element(1, 1.0),
        );
        assert_eq!(r, DVector::zeros(2));
    }

    #[test]
    fn residual_is_affine_in_port_signals() {
        let f = one_dof();
        let a = DVector::from_element(1, 0.3);
        let a0 = DVector::from_element(1, 0.1);
        let base = f.residual(&a, &a0, 0.5, &DVector::zeros(1), &DVector::zeros(1));
        let di = f.residual(&a, &a0, 0.5, &DVector::from_element(1, 1.0), &DVector::zeros(1)) - &base;
        let dv = f.residual(&a, &a0, 0.5, &DVector::zeros(1), &DVector::from_element(1, 1.0)) - &base;
        assert_eq!(di, DVector::from_vec(vec![-1.0, 0.0]));
        assert_eq!(dv, DVector::from_vec(vec![0.0, -1.0]));
    }

    #[test]
    fn equivalent_inductance_of_one_dof() {
        let l = one_dof().equivalent_inductance().unwrap();
        assert!((l[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn initial_current_from_static_state() {
        let f = one_dof();
        let a0 = f.static_state(&DVector::from_element(1, 3.0)).unwrap();
        assert!((a0[0] - 1.5).abs() < 1e-15);
        let i0 = f.initial_current(&a0, &DVector::zeros(1)).unwrap();
        assert!((i0[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn block_diag_and_selection() {
        let two = FieldModel::block_diag(&[one_dof(), one_dof()]);
        assert_eq!(two.dofs(), 2);
        assert_eq!(two.coil_count(), 2);
        let a = DVector::from_vec(vec![1.0, 3.0]);
        assert_eq!(two.stiffness_action(&a), DVector::from_vec(vec![2.0, 6.0]));
        let sel = two.select_coils(&[1]).unwrap();
        assert_eq!(sel.coupling().column(0).as_slice(), &[0.0, 1.0]);
        assert!(two.select_coils(&[2]).is_err());
    }
}
