//! A small built-in transformer cross-section.
//!
//! On the unit square (lengths in sixteenths):
//!
//! ```text
//! core ring      [4, 12]² minus the window (6, 10)²
//! primary        go side [7, 8] × [7, 9], return side [2, 3] × [7, 9]
//! secondary      go side [8, 9] × [7, 9], return side [13, 14] × [7, 9]
//! ```
//!
//! The primary winds around the left leg and the secondary around the right
//! leg. Coils sit one sixteenth away from the core so that coil rows of `M`
//! vanish even when the core conducts. The secondary carries zero current
//! and therefore gets no column in `X` unless it is explicitly coupled.

use std::collections::BTreeMap;

use super::{
    assemble_fe, CoilSpec, FieldError, FieldModel, Material, MaterialTable, Mesh2D, ReluctivityLaw, NU_VACUUM,
};

pub const REGION_AIR: u32 = 0;
pub const REGION_CORE: u32 = 1;
pub const REGION_PRIMARY_GO: u32 = 2;
pub const REGION_PRIMARY_RETURN: u32 = 3;
pub const REGION_SECONDARY_GO: u32 = 4;
pub const REGION_SECONDARY_RETURN: u32 = 5;

/// Built-in model names accepted by [`builtin_model`].
pub const BUILTIN_NAMES: [&str; 3] = ["transformer-lite", "transformer-lite-eddy", "transformer-lite-brauer"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoreLaw {
    /// Constant relative permeability.
    Linear {
        mu_r: f64,
    },
    Nonlinear(ReluctivityLaw),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerLite {
    /// Vertices per side; `n − 1` must be a multiple of 16.
    pub n: usize,
    /// Core conductivity in S/m.
    pub sigma_core: f64,
    pub core: CoreLaw,
    pub primary_turns: f64,
    pub secondary_turns: f64,
    /// Adds the secondary as a second coupled coil.
    pub couple_secondary: bool,
}

impl Default for TransformerLite {
    fn default() -> Self {
        TransformerLite {
            n: 33,
            sigma_core: 0.0,
            core: CoreLaw::Linear { mu_r: 1000.0 },
            primary_turns: 90.0,
            secondary_turns: 90.0,
            couple_secondary: false,
        }
    }
}

fn region_of(c: [f64; 2]) -> u32 {
    let (x, y) = (c[0] * 16.0, c[1] * 16.0);
    let inside = |x0: f64, x1: f64, y0: f64, y1: f64| x > x0 && x < x1 && y > y0 && y < y1;
    if inside(4.0, 12.0, 4.0, 12.0) && !inside(6.0, 10.0, 6.0, 10.0) {
        REGION_CORE
    } else if inside(7.0, 8.0, 7.0, 9.0) {
        REGION_PRIMARY_GO
    } else if inside(2.0, 3.0, 7.0, 9.0) {
        REGION_PRIMARY_RETURN
    } else if inside(8.0, 9.0, 7.0, 9.0) {
        REGION_SECONDARY_GO
    } else if inside(13.0, 14.0, 7.0, 9.0) {
        REGION_SECONDARY_RETURN
    } else {
        REGION_AIR
    }
}

impl TransformerLite {
    pub fn mesh(&self) -> Result<Mesh2D, FieldError> {
        if self.n < 17 || !(self.n - 1).is_multiple_of(16) {
            return Err(FieldError::InvalidMesh(format!(
                "transformer-lite needs n = 16k + 1 vertices per side, got {}",
                self.n
            )));
        }
        Ok(Mesh2D::unit_square(self.n, region_of))
    }

    pub fn materials(&self) -> MaterialTable {
        let core_law = match self.core {
            CoreLaw::Linear { mu_r } => ReluctivityLaw::Constant(NU_VACUUM / mu_r),
            CoreLaw::Nonlinear(law) => law,
        };
        let mut table = BTreeMap::from([(REGION_CORE, Material { sigma: self.sigma_core, reluctivity: core_law })]);
        for r in [REGION_AIR, REGION_PRIMARY_GO, REGION_PRIMARY_RETURN, REGION_SECONDARY_GO, REGION_SECONDARY_RETURN] {
            table.insert(r, Material::air());
        }
        table
    }

    pub fn coils(&self) -> Vec<CoilSpec> {
        vec![
            CoilSpec {
                name: "primary".into(),
                turns: self.primary_turns,
                positive_region: REGION_PRIMARY_GO,
                negative_region: Some(REGION_PRIMARY_RETURN),
                coupled: true,
            },
            CoilSpec {
                name: "secondary".into(),
                turns: self.secondary_turns,
                positive_region: REGION_SECONDARY_GO,
                negative_region: Some(REGION_SECONDARY_RETURN),
                coupled: self.couple_secondary,
            },
        ]
    }

    pub fn build(&self) -> Result<FieldModel, FieldError> {
        assemble_fe(&self.mesh()?, &self.materials(), &self.coils())
    }
}

/// Configuration behind a built-in model name.
pub fn builtin_config(name: &str) -> Result<TransformerLite, FieldError> {
    let base = TransformerLite::default();
    match name {
        "transformer-lite" => Ok(base),
        "transformer-lite-eddy" => Ok(TransformerLite { sigma_core: 1e3, ..base }),
        "transformer-lite-brauer" => {
            Ok(TransformerLite { core: CoreLaw::Nonlinear(ReluctivityLaw::brauer_default()), ..base })
        }
        other => Err(FieldError::UnknownBuiltin(other.to_string())),
    }
}

pub fn builtin_model(name: &str) -> Result<FieldModel, FieldError> {
    builtin_config(name)?.build()
}
