//! MatrixMarket coordinate files for linear field models.
//!
//! A model is stored as three files `M.mtx`, `K.mtx` and `X.mtx`. Coil
//! metadata travels in `X.mtx` as comment lines `% coil <name> <turns>`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra_sparse::CscMatrix;

use super::{CoilInfo, FieldError, FieldModel};
use crate::linalg::{asymmetry, csc_from_triplets, rank, sparse_norm, to_dense};

/// Relative tolerance for the symmetry of ingested `M` and `K`.
pub const SYMMETRY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixModelPaths {
    pub m: PathBuf,
    pub k: PathBuf,
    pub x: PathBuf,
}

impl MatrixModelPaths {
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        MatrixModelPaths { m: dir.join("M.mtx"), k: dir.join("K.mtx"), x: dir.join("X.mtx") }
    }

    fn read(&self) -> Result<[String; 3], FieldError> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| FieldError::Io(format!("{}: {e}", p.display())));
        Ok([read(&self.m)?, read(&self.k)?, read(&self.x)?])
    }
}

/// Parses a real coordinate matrix (`general` or `symmetric`). Duplicate
/// entries are summed.
pub fn read_matrix_market(text: &str) -> Result<CscMatrix<f64>, FieldError> {
    let err = |msg: String| FieldError::Parse(format!("MatrixMarket: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(err(format!("unsupported header `{header}`")));
    }
    if h[3] != "real" && h[3] != "integer" {
        return Err(err(format!("unsupported field `{}`", h[3])));
    }
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(format!("unsupported symmetry `{other}`"))),
    };
    let mut data = lines.filter(|l| !l.trim_start().starts_with('%') && !l.trim().is_empty());
    let size = data.next().ok_or_else(|| err("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(format!("bad size line `{size}`"))))
        .collect::<Result<_, _>>()?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(err(format!("bad size line `{size}`")));
    };
    let mut trip = Vec::with_capacity(if symmetric { 2 * nnz } else { nnz });
    for _ in 0..nnz {
        let line = data.next().ok_or_else(|| err("fewer entries than declared".into()))?;
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 3 {
            return Err(err(format!("bad entry `{line}`")));
        }
        let idx = |s: &str, max: usize| -> Result<usize, FieldError> {
            match s.parse::<usize>() {
                Ok(i) if (1..=max).contains(&i) => Ok(i - 1),
                _ => Err(err(format!("index `{s}` out of range"))),
            }
        };
        let (i, j) = (idx(tok[0], nrows)?, idx(tok[1], ncols)?);
        let v: f64 = tok[2].parse().map_err(|_| err(format!("bad value `{}`", tok[2])))?;
        trip.push((i, j, v));
        if symmetric && i != j {
            trip.push((j, i, v));
        }
    }
    if data.next().is_some() {
        return Err(err("more entries than declared".into()));
    }
    Ok(csc_from_triplets(nrows, ncols, &trip))
}

/// Writes a `general` coordinate file with shortest round-trip values.
pub fn write_matrix_market(a: &CscMatrix<f64>, comments: &[String]) -> String {
    let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
    for c in comments {
        let _ = writeln!(s, "% {c}");
    }
    let entries: Vec<_> = a.triplet_iter().filter(|(_, _, v)| **v != 0.0).collect();
    let _ = writeln!(s, "{} {} {}", a.nrows(), a.ncols(), entries.len());
    for (i, j, v) in entries {
        let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
    }
    s
}

fn check_symmetric(a: &CscMatrix<f64>) -> Result<(), FieldError> {
    let scale = sparse_norm(a);
    let asym = asymmetry(a);
    if asym > SYMMETRY_RTOL * scale {
        return Err(FieldError::Asymmetric(asym / scale));
    }
    Ok(())
}

fn coil_comments(text: &str) -> Vec<CoilInfo> {
    text.lines()
        .filter_map(|l| {
            let rest = l.trim_start().strip_prefix('%')?.trim();
            let mut tok = rest.split_whitespace();
            (tok.next()? == "coil").then_some(())?;
            let name = tok.next()?.to_string();
            let turns = tok.next()?.parse().ok()?;
            Some(CoilInfo { name, turns })
        })
        .collect()
}

/// Builds a linear model from the contents of `M.mtx`, `K.mtx` and `X.mtx`.
/// Rejects asymmetric `M` or `K` and rank-deficient `X`.
pub fn read_matrix_model(m: &str, k: &str, x: &str) -> Result<FieldModel, FieldError> {
    read_model(m, k, x, true)
}

/// Like [`read_matrix_model`] but only checks dimensions, so that
/// [`validate_assumptions`](super::validate_assumptions) can report on
/// broken models.
pub fn read_matrix_model_unchecked(m: &str, k: &str, x: &str) -> Result<FieldModel, FieldError> {
    read_model(m, k, x, false)
}

fn read_model(m: &str, k: &str, x: &str, checked: bool) -> Result<FieldModel, FieldError> {
    let mass = read_matrix_market(m)?;
    let stiffness = read_matrix_market(k)?;
    let coupling = to_dense(&read_matrix_market(x)?);
    let n = mass.nrows();
    if mass.ncols() != n || stiffness.nrows() != n || stiffness.ncols() != n || coupling.nrows() != n {
        return Err(FieldError::DimensionMismatch(format!(
            "M {}x{}, K {}x{}, X {}x{}",
            mass.nrows(),
            mass.ncols(),
            stiffness.nrows(),
            stiffness.ncols(),
            coupling.nrows(),
            coupling.ncols()
        )));
    }
    if checked {
        check_symmetric(&mass)?;
        check_symmetric(&stiffness)?;
        if rank(&coupling) < coupling.ncols() {
            return Err(FieldError::RankDeficient);
        }
    }
    let mut coils = coil_comments(x);
    if coils.len() != coupling.ncols() {
        coils = (0..coupling.ncols()).map(|j| CoilInfo { name: format!("coil{j}"), turns: 1.0 }).collect();
    }
    FieldModel::linear(mass, stiffness, coupling, coils)
}

pub fn load_matrix_model(paths: &MatrixModelPaths) -> Result<FieldModel, FieldError> {
    let [m, k, x] = paths.read()?;
    read_matrix_model(&m, &k, &x)
}

pub fn load_matrix_model_unchecked(paths: &MatrixModelPaths) -> Result<FieldModel, FieldError> {
    let [m, k, x] = paths.read()?;
    read_matrix_model_unchecked(&m, &k, &x)
}

/// Writes `M.mtx`, `K.mtx` and `X.mtx` into `dir`. Only linear models can be
/// exported.
pub fn write_matrix_model(model: &FieldModel, dir: impl AsRef<Path>) -> Result<MatrixModelPaths, FieldError> {
    if !model.is_linear() {
        return Err(FieldError::NonlinearExport);
    }
    let k = model.stiffness_matrix(&nalgebra::DVector::zeros(model.dofs()));
    let x = model.coupling();
    let x_sparse = csc_from_triplets(
        x.nrows(),
        x.ncols(),
        &x.iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(idx, v)| (idx % x.nrows(), idx / x.nrows(), *v))
            .collect::<Vec<_>>(),
    );
    let coils: Vec<String> = model.coils().iter().map(|c| format!("coil {} {:e}", c.name, c.turns)).collect();
    let paths = MatrixModelPaths::from_dir(&dir);
    let write = |p: &Path, s: String| std::fs::write(p, s).map_err(|e| FieldError::Io(format!("{}: {e}", p.display())));
    std::fs::create_dir_all(dir.as_ref()).map_err(|e| FieldError::Io(e.to_string()))?;
    write(&paths.m, write_matrix_market(model.mass(), &[]))?;
    write(&paths.k, write_matrix_market(&k, &[]))?;
    write(&paths.x, write_matrix_market(&x_sparse, &coils))?;
    Ok(paths)
}
