//! P1 finite elements for the z-component of the vector potential.
//!
//! In a 2D cross-section lowest-order edge elements reduce to nodal P1
//! elements for `A_z` and `curl` becomes a rotated gradient, so
//! `|B|² = |∇A_z|²` and
//!
//! ```text
//! M_ij    = Σ_T σ_T ∫_T φ_i φ_j
//! K(a)_ij = Σ_T ν_T(|B_T(a)|²) ∫_T ∇φ_i · ∇φ_j
//! X_ij    = ∫ χ_j φ_i,   χ_j = ±N_j / area(coil side)
//! ```

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{CoilInfo, FieldError, FieldModel, Mesh2D, StiffnessBlock, StiffnessKind, NU_VACUUM};
use crate::linalg::csc_from_triplets;

/// Magnetic reluctivity as a function of `b² = |B|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReluctivityLaw {
    Constant(f64),
    /// `ν(b²) = min(k1 · exp(k2 · b²) + k3, nu_max)`.
    Brauer {
        k1: f64,
        k2: f64,
        k3: f64,
        nu_max: f64,
    },
}

impl ReluctivityLaw {
    /// Brauer coefficients for a generic electrical steel; `ν` stays within
    /// `[ν₀/5000, ν₀]`.
    pub fn brauer_default() -> Self {
        ReluctivityLaw::Brauer { k1: 3.8, k2: 2.17, k3: 396.2, nu_max: NU_VACUUM }
    }

    pub fn nu(&self, b2: f64) -> f64 {
        match *self {
            ReluctivityLaw::Constant(nu) => nu,
            ReluctivityLaw::Brauer { k1, k2, k3, nu_max } => (k1 * (k2 * b2).exp() + k3).min(nu_max),
        }
    }

    /// `dν/d(b²)`.
    pub fn dnu(&self, b2: f64) -> f64 {
        match *self {
            ReluctivityLaw::Constant(_) => 0.0,
            ReluctivityLaw::Brauer { k1, k2, k3, nu_max } => {
                let e = k1 * (k2 * b2).exp();
                if e + k3 < nu_max {
                    k1 * k2 * (k2 * b2).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// Lower bound of `ν` over all `b²`.
    pub fn nu_min(&self) -> f64 {
        match *self {
            ReluctivityLaw::Constant(nu) => nu,
            ReluctivityLaw::Brauer { k1, k3, nu_max, .. } => (k1 + k3).min(nu_max),
        }
    }

    fn check(&self) -> Result<(), String> {
        match *self {
            ReluctivityLaw::Constant(nu) if nu > 0.0 && nu.is_finite() => Ok(()),
            ReluctivityLaw::Constant(nu) => Err(format!("reluctivity {nu} must be positive")),
            ReluctivityLaw::Brauer { k1, k2, k3, nu_max } => {
                if k1 >= 0.0 && k2 >= 0.0 && k3 > 0.0 && nu_max >= k1 + k3 {
                    Ok(())
                } else {
                    Err("Brauer law needs k1, k2 >= 0, k3 > 0 and nu_max >= k1 + k3".into())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Conductivity in S/m.
    pub sigma: f64,
    pub reluctivity: ReluctivityLaw,
}

impl Material {
    pub fn air() -> Self {
        Material { sigma: 0.0, reluctivity: ReluctivityLaw::Constant(NU_VACUUM) }
    }
}

pub type MaterialTable = BTreeMap<u32, Material>;

/// A stranded coil: `turns` windings with go/return sides in two regions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSpec {
    pub name: String,
    pub turns: f64,
    pub positive_region: u32,
    pub negative_region: Option<u32>,
    /// Uncoupled coils carry an imposed zero current and get no column in `X`.
    pub coupled: bool,
}

/// Per-triangle data of a nonlinear stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct FeElement {
    pub dofs: [Option<usize>; 3],
    pub grads: [[f64; 2]; 3],
    pub area: f64,
    pub law: ReluctivityLaw,
}

impl FeElement {
    fn local(&self, a: &DVector<f64>) -> ([f64; 3], [f64; 2]) {
        let av = self.dofs.map(|d| d.map_or(0.0, |i| a[i]));
        let g = [
            av.iter().zip(&self.grads).map(|(x, gr)| x * gr[0]).sum::<f64>(),
            av.iter().zip(&self.grads).map(|(x, gr)| x * gr[1]).sum::<f64>(),
        ];
        (av, g)
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        self.grads[i][0] * self.grads[j][0] + self.grads[i][1] * self.grads[j][1]
    }
}

/// `a ↦ K(a)` for reluctivities depending on the local flux density.
#[derive(Debug, Clone, PartialEq)]
pub struct FeStiffness {
    pub dofs: usize,
    pub elements: Vec<FeElement>,
}

impl FeStiffness {
    pub fn action(&self, a: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dofs);
        for el in &self.elements {
            let (_, g) = el.local(a);
            let nu = el.law.nu(g[0] * g[0] + g[1] * g[1]);
            for i in 0..3 {
                if let Some(di) = el.dofs[i] {
                    y[di] += nu * el.area * (el.grads[i][0] * g[0] + el.grads[i][1] * g[1]);
                }
            }
        }
        y
    }

    /// Appends `K(a)` (or the Jacobian of `K(a) a`) as triplets shifted by `off`.
    pub fn triplets(&self, a: &DVector<f64>, jacobian: bool, off: usize, out: &mut Vec<(usize, usize, f64)>) {
        for el in &self.elements {
            let (_, g) = el.local(a);
            let b2 = g[0] * g[0] + g[1] * g[1];
            let nu = el.law.nu(b2);
            let dnu = if jacobian { el.law.dnu(b2) } else { 0.0 };
            let proj: [f64; 3] = std::array::from_fn(|i| el.grads[i][0] * g[0] + el.grads[i][1] * g[1]);
            for i in 0..3 {
                let Some(di) = el.dofs[i] else { continue };
                for j in 0..3 {
                    let Some(dj) = el.dofs[j] else { continue };
                    let v = el.area * (nu * el.dot(i, j) + 2.0 * dnu * proj[i] * proj[j]);
                    out.push((di + off, dj + off, v));
                }
            }
        }
    }
}

/// Gradients of the three P1 hat functions and the triangle area.
pub(crate) fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let grads = std::array::from_fn(|i| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        [(p[j][1] - p[k][1]) / area2, (p[k][0] - p[j][0]) / area2]
    });
    (grads, 0.5 * area2)
}

/// Assembles `(M, K(·), X)` on a validated mesh.
pub fn assemble_fe(mesh: &Mesh2D, materials: &MaterialTable, coils: &[CoilSpec]) -> Result<FieldModel, FieldError> {
    mesh.validate()?;
    for (&region, mat) in materials {
        if !(mat.sigma >= 0.0 && mat.sigma.is_finite()) {
            return Err(FieldError::InvalidMaterial { region, reason: format!("sigma {} < 0", mat.sigma) });
        }
        mat.reluctivity.check().map_err(|reason| FieldError::InvalidMaterial { region, reason })?;
    }
    let mut dof_of = vec![None; mesh.vertices.len()];
    let mut n = 0;
    let mut fixed = mesh.dirichlet.iter().peekable();
    for (v, slot) in dof_of.iter_mut().enumerate() {
        if fixed.peek() == Some(&&v) {
            fixed.next();
        } else {
            *slot = Some(n);
            n += 1;
        }
    }
    if n == 0 {
        return Err(FieldError::NoDegreesOfFreedom);
    }

    let mut mass = Vec::new();
    let mut elements = Vec::with_capacity(mesh.triangles.len());
    let mut region_area: BTreeMap<u32, f64> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let region = mesh.regions[t];
        let mat = materials.get(&region).ok_or(FieldError::UnknownRegion(region))?;
        let (grads, area) = p1_gradients(tri.map(|v| mesh.vertices[v]));
        *region_area.entry(region).or_default() += area;
        let dofs = tri.map(|v| dof_of[v]);
        if mat.sigma > 0.0 {
            // Edge-midpoint rule, exact for the quadratic integrand.
            for i in 0..3 {
                for j in 0..3 {
                    if let (Some(di), Some(dj)) = (dofs[i], dofs[j]) {
                        let phi_phi = if i == j { 2.0 } else { 1.0 } * area / 12.0;
                        mass.push((di, dj, mat.sigma * phi_phi));
                    }
                }
            }
        }
        elements.push(FeElement { dofs, grads, area, law: mat.reluctivity });
    }

    let coupled: Vec<&CoilSpec> = coils.iter().filter(|c| c.coupled).collect();
    if coupled.is_empty() {
        return Err(FieldError::EmptyCoilRegion("<no coupled coil>".into()));
    }
    let mut x = DMatrix::zeros(n, coupled.len());
    for (j, coil) in coupled.iter().enumerate() {
        let sides = std::iter::once((coil.positive_region, 1.0)).chain(coil.negative_region.map(|r| (r, -1.0)));
        for (region, sign) in sides {
            let area = region_area.get(&region).copied().unwrap_or(0.0);
            if area <= 0.0 {
                return Err(FieldError::EmptyCoilRegion(coil.name.clone()));
            }
            let chi = sign * coil.turns / area;
            for (t, el) in elements.iter().enumerate() {
                if mesh.regions[t] != region {
                    continue;
                }
                // Three-point vertex rule, exact for linear integrands.
                for d in el.dofs.iter().flatten() {
                    x[(*d, j)] += chi * el.area / 3.0;
                }
            }
        }
    }

    let stiffness = if elements.iter().all(|e| matches!(e.law, ReluctivityLaw::Constant(_))) {
        let fe = FeStiffness { dofs: n, elements };
        let mut trip = Vec::new();
        fe.triplets(&DVector::zeros(n), false, 0, &mut trip);
        StiffnessKind::Linear(csc_from_triplets(n, n, &trip))
    } else {
        StiffnessKind::Fe(FeStiffness { dofs: n, elements })
    };
    let coil_info = coupled.iter().map(|c| CoilInfo { name: c.name.clone(), turns: c.turns }).collect();
    FieldModel::from_parts(
        csc_from_triplets(n, n, &mass),
        vec![StiffnessBlock { offset: 0, dofs: n, kind: stiffness }],
        x,
        coil_info,
    )
}
