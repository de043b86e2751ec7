//! Numerical checks of the structural assumptions on `(M, K(·), X)`.

use std::fmt;

use nalgebra::DVector;
use nalgebra_sparse::factorization::CscCholesky;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::FieldModel;
use crate::linalg::{asymmetry, rank, sparse_norm};

/// Relative tolerance of the symmetry check on `M`.
pub const SYMMETRY_RTOL: f64 = 1e-12;
/// Monotonicity must hold with at least this constant.
pub const MONOTONICITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Random states for the definiteness check.
    pub samples: usize,
    /// Random pairs for the monotonicity check.
    pub pairs: usize,
    /// Random states are uniform in `[−scale, scale]` per dof.
    pub scale: f64,
    pub seed: u64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions { samples: 50, pairs: 200, scale: 0.05, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    /// Smallest observed `(a₂−a₁)ᵀ(K(a₂)a₂−K(a₁)a₁) / ‖a₂−a₁‖²`.
    pub mu_estimate: f64,
    /// `XᵀM = 0`, the stranded-coil case.
    pub coils_outside_conductors: bool,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        writeln!(f, "monotonicity constant estimate: {:e}", self.mu_estimate)?;
        writeln!(f, "X^T M = 0: {}", if self.coils_outside_conductors { "yes" } else { "no" })
    }
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..=scale))
}

/// Runs the symmetry, definiteness, rank and monotonicity checks. Failures
/// are reported, never raised. Identical options give identical reports.
pub fn validate_assumptions(model: &FieldModel, opts: &ValidationOptions) -> ValidationReport {
    let n = model.dofs();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = Vec::new();

    let m = model.mass();
    let norm = sparse_norm(m);
    let asym = asymmetry(m);
    checks.push(CheckResult {
        name: "M symmetric".into(),
        passed: asym <= SYMMETRY_RTOL * norm,
        detail: format!("‖M−Mᵀ‖ = {asym:e}, ‖M‖ = {norm:e}"),
    });

    let mut failures = 0;
    for _ in 0..opts.samples {
        let a = random_state(&mut rng, n, opts.scale);
        let pencil = m + &model.stiffness_matrix(&a);
        if n > 0 && CscCholesky::factor(&pencil).is_err() {
            failures += 1;
        }
    }
    checks.push(CheckResult {
        name: "M + K(a) positive definite".into(),
        passed: failures == 0,
        detail: format!("Cholesky failed at {failures} of {} random states", opts.samples),
    });

    let x = model.coupling();
    let r = rank(x);
    checks.push(CheckResult {
        name: "X full column rank".into(),
        passed: r == x.ncols(),
        detail: format!("rank {r} of {} columns", x.ncols()),
    });

    let mut mu = f64::INFINITY;
    for _ in 0..opts.pairs {
        let a1 = random_state(&mut rng, n, opts.scale);
        let a2 = random_state(&mut rng, n, opts.scale);
        let d = &a2 - &a1;
        let dd = d.norm_squared();
        if dd == 0.0 {
            continue;
        }
        let gap = d.dot(&(model.stiffness_action(&a2) - model.stiffness_action(&a1)));
        mu = mu.min(gap / dd);
    }
    checks.push(CheckResult {
        name: "K(a)a strongly monotone".into(),
        passed: mu >= MONOTONICITY_FLOOR,
        detail: format!("min ratio {mu:e} over {} random pairs", opts.pairs),
    });

    let xm = nalgebra::DMatrix::from_fn(x.ncols(), n, |j, c| {
        let col = m.col(c);
        col.row_indices().iter().zip(col.values()).map(|(&i, v)| x[(i, j)] * v).sum::<f64>()
    });
    ValidationReport { checks, mu_estimate: mu, coils_outside_conductors: xm.iter().all(|v| *v == 0.0) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{assemble_fe, CoilSpec, Material, Mesh2D, ReluctivityLaw};
    use std::collections::BTreeMap;

    fn square(sigma: f64, law: ReluctivityLaw) -> FieldModel {
        let mesh = Mesh2D::unit_square(6, |c| if c[0] < 0.5 { 0 } else { 1 });
        let mats = BTreeMap::from([
            (0, Material { sigma: 0.0, reluctivity: ReluctivityLaw::Constant(1.0) }),
            (1, Material { sigma, reluctivity: law }),
        ]);
        let coils =
            [CoilSpec { name: "c".into(), turns: 1.0, positive_region: 0, negative_region: None, coupled: true }];
        assemble_fe(&mesh, &mats, &coils).unwrap()
    }

    #[test]
    fn linear_model_passes() {
        let r = validate_assumptions(&square(2.0, ReluctivityLaw::Constant(3.0)), &ValidationOptions::default());
        assert!(r.all_passed(), "{r}");
        assert!(r.mu_estimate > 0.0);
    }

    #[test]
    fn negative_conductivity_breaks_definiteness() {
        // The assembler rejects σ < 0, so flip the sign of a valid mass matrix.
        let ok = square(1e6, ReluctivityLaw::Constant(1.0));
        let bad = FieldModel::linear(
            -ok.mass().clone(),
            ok.stiffness_matrix(&DVector::zeros(ok.dofs())),
            ok.coupling().clone(),
            ok.coils().to_vec(),
        )
        .unwrap();
        let r = validate_assumptions(&bad, &ValidationOptions::default());
        assert!(!r.checks[1].passed);
    }

    #[test]
    fn brauer_law_is_monotone_and_deterministic() {
        let law = ReluctivityLaw::Brauer { k1: 1.0, k2: 2.0, k3: 0.5, nu_max: 1e6 };
        let model = square(0.0, law);
        let opts = ValidationOptions { scale: 1.0, seed: 7, ..ValidationOptions::default() };
        let r = validate_assumptions(&model, &opts);
        assert!(r.checks[3].passed, "{r}");
        assert_eq!(r, validate_assumptions(&model, &opts));
    }
}
