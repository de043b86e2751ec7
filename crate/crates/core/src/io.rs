//! Run configuration, problem setup and CSV output.
//!
//! A run is described by a JSON document; every key except `netlist` is
//! optional and defaults to the benchmark setup (window `[0, 0.8]` s,
//! `δt = 10⁻²` s, probe `n3`). Relative netlist paths are resolved against
//! the configuration file, relative field-model directories against the
//! netlist.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{
    builtin_model, load_matrix_model, load_matrix_model_unchecked, FieldError, FieldModel, MatrixModelPaths,
    BUILTIN_NAMES,
};
use crate::mna::MnaSystem;
use crate::monolithic::{solve_monolithic, CoupledTrajectory};
use crate::netlist::{parse_netlist, ElementKind, Netlist, NetlistError};
use crate::solver::{uniform_grid, SolveOptions, SolverError};
use crate::wr::{gauss_seidel_wr, iterate_history_export, WrError, WrOptions, WrResult, WrStatus};

/// Significant digits in CSV output.
pub const CSV_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("field model `{id}`: {source}")]
    Field { id: String, source: FieldError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Wr(#[from] WrError),
    #[error("csv: {0}")]
    Csv(String),
}

fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::File { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Wr,
    #[serde(alias = "monolithic")]
    Mono,
    #[default]
    Both,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "wr" => Some(Mode::Wr),
            "mono" | "monolithic" => Some(Mode::Mono),
            "both" => Some(Mode::Both),
            _ => None,
        }
    }

    fn runs_wr(self) -> bool {
        self != Mode::Mono
    }

    fn runs_mono(self) -> bool {
        self != Mode::Wr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub netlist: PathBuf,
    /// Overrides for `.field` targets: model id → builtin name or directory.
    pub fields: BTreeMap<String, String>,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub field_dt: Option<f64>,
    pub circuit_dt: Option<f64>,
    pub wr_tol: f64,
    pub k_max: usize,
    pub blowup_factor: f64,
    pub windows: usize,
    pub newton_tol: f64,
    pub newton_max: usize,
    pub probe: String,
    pub output: Option<PathBuf>,
    pub mode: Mode,
    pub seed: u64,
    pub low_memory: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let wr = WrOptions::default();
        let solve = SolveOptions::default();
        RunConfig {
            netlist: PathBuf::new(),
            fields: BTreeMap::new(),
            t_start: wr.t_start,
            t_end: wr.t_end,
            dt: solve.dt,
            field_dt: None,
            circuit_dt: None,
            wr_tol: wr.wr_tol,
            k_max: wr.k_max,
            blowup_factor: wr.blowup_factor,
            windows: wr.windows,
            newton_tol: solve.newton_tol,
            newton_max: solve.newton_max,
            probe: "n3".into(),
            output: None,
            mode: Mode::Both,
            seed: 0,
            low_memory: false,
        }
    }
}

impl RunConfig {
    /// Parses a JSON config; a relative `netlist` is resolved against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, IoError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        if cfg.netlist.as_os_str().is_empty() {
            return Err(IoError::Config("missing `netlist`".into()));
        }
        if cfg.netlist.is_relative() {
            cfg.netlist = base.join(&cfg.netlist);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_json(&read_file(path)?, base)
    }

    pub fn wr_options(&self) -> WrOptions {
        let solve = |dt: Option<f64>| SolveOptions {
            dt: dt.unwrap_or(self.dt),
            newton_tol: self.newton_tol,
            newton_max: self.newton_max,
            ..SolveOptions::default()
        };
        WrOptions {
            t_start: self.t_start,
            t_end: self.t_end,
            wr_tol: self.wr_tol,
            k_max: self.k_max,
            blowup_factor: self.blowup_factor,
            windows: self.windows,
            field: solve(self.field_dt),
            circuit: solve(self.circuit_dt),
            low_memory: self.low_memory,
        }
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.wr_options().validate().map_err(|e| IoError::Config(e.to_string()))?;
        if !self.netlist.is_file() {
            return Err(IoError::File { path: self.netlist.clone(), message: "netlist not found".into() });
        }
        Ok(())
    }
}

/// Resolves a field reference: a builtin name or a directory holding
/// `M.mtx`, `K.mtx` and `X.mtx`.
pub fn load_field_reference(target: &str, base: &Path) -> Result<FieldModel, FieldError> {
    resolve_field(target, base, load_matrix_model)
}

/// [`load_field_reference`] without the symmetry and rank checks on matrix
/// files, for validating models that may violate them.
pub fn load_field_reference_unchecked(target: &str, base: &Path) -> Result<FieldModel, FieldError> {
    resolve_field(target, base, load_matrix_model_unchecked)
}

fn resolve_field(
    target: &str,
    base: &Path,
    load: fn(&MatrixModelPaths) -> Result<FieldModel, FieldError>,
) -> Result<FieldModel, FieldError> {
    if BUILTIN_NAMES.contains(&target) {
        return builtin_model(target);
    }
    let dir = base.join(target);
    if !dir.is_dir() {
        return Err(FieldError::UnknownBuiltin(format!(
            "{target} (neither a builtin {BUILTIN_NAMES:?} nor a model directory)"
        )));
    }
    load(&MatrixModelPaths::from_dir(dir))
}

/// A circuit with its coupled field model and initial values.
#[derive(Debug, Clone)]
pub struct Problem {
    pub netlist: Netlist,
    pub circuit: MnaSystem,
    /// Coil columns ordered like the circuit's field ports.
    pub field: FieldModel,
    pub x0: DVector<f64>,
    pub a0: DVector<f64>,
}

impl Problem {
    /// Couples every field port of `netlist` to its model coil. Several
    /// models are combined block-diagonally. Initial values are zero.
    pub fn build(netlist: Netlist, base: &Path, overrides: &BTreeMap<String, String>) -> Result<Problem, IoError> {
        let ports: Vec<(String, usize)> = netlist
            .field_ports()
            .map(|p| match &p.kind {
                ElementKind::FieldPort { field, coil } => (field.clone(), *coil),
                _ => unreachable!("field_ports yields ports"),
            })
            .collect();
        let mut ids: Vec<&str> = Vec::new();
        for (id, _) in &ports {
            if !ids.contains(&id.as_str()) {
                ids.push(id);
            }
        }
        let mut blocks = Vec::new();
        let mut column_of_port = vec![0; ports.len()];
        let mut offset = 0;
        for id in ids {
            let target = overrides
                .get(id)
                .or_else(|| netlist.fields.get(id))
                .ok_or_else(|| IoError::Config(format!("field model `{id}` is not declared")))?;
            let field_err = |source| IoError::Field { id: id.to_string(), source };
            let model = load_field_reference(target, base).map_err(field_err)?;
            let mut coils = Vec::new();
            for (p, (pid, coil)) in ports.iter().enumerate() {
                if pid != id {
                    continue;
                }
                if coils.contains(coil) {
                    return Err(IoError::Config(format!("coil {coil} of `{id}` is used by two ports")));
                }
                column_of_port[p] = offset + coils.len();
                coils.push(*coil);
            }
            offset += coils.len();
            blocks.push(model.select_coils(&coils).map_err(field_err)?);
        }
        let field = FieldModel::block_diag(&blocks)
            .select_coils(&column_of_port)
            .map_err(|source| IoError::Field { id: "<combined>".into(), source })?;
        let circuit = MnaSystem::from_netlist(&netlist);
        let x0 = DVector::zeros(circuit.dim());
        let a0 = DVector::zeros(field.dofs());
        Ok(Problem { netlist, circuit, field, x0, a0 })
    }

    pub fn load(cfg: &RunConfig) -> Result<Problem, IoError> {
        let netlist = parse_netlist(&read_file(&cfg.netlist)?)?;
        let base = cfg.netlist.parent().unwrap_or(Path::new("."));
        Problem::build(netlist, base, &cfg.fields)
    }
}

/// A CSV table of equally long columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, header: &str) -> Option<&[f64]> {
        let i = self.headers.iter().position(|h| h == header)?;
        Some(&self.columns[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.headers.join(",");
        s.push('\n');
        for r in 0..self.rows() {
            let cells: Vec<String> = self.columns.iter().map(|c| format_significant(c[r], CSV_DIGITS)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Table, IoError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| IoError::Csv("empty file".into()))?;
        let headers: Vec<String> = header.split(',').map(|h| h.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != headers.len() {
                return Err(IoError::Csv(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    cells.len(),
                    headers.len()
                )));
            }
            for (col, cell) in columns.iter_mut().zip(cells) {
                col.push(cell.trim().parse().map_err(|_| IoError::Csv(format!("bad number `{cell}`")))?);
            }
        }
        Ok(Table { headers, columns })
    }
}

/// Plain decimal notation rounded to `digits` significant digits, without
/// exponent and without trailing zeros.
pub fn format_significant(v: f64, digits: usize) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits_only: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    let point = exp + 1;
    if point <= 0 {
        out.push_str("0.");
        out.extend(std::iter::repeat_n('0', (-point) as usize));
        out.push_str(&digits_only);
    } else if point as usize >= digits_only.len() {
        out.push_str(&digits_only);
        out.extend(std::iter::repeat_n('0', point as usize - digits_only.len()));
    } else {
        let (int, frac) = digits_only.split_at(point as usize);
        let _ = write!(out, "{int}.{frac}");
    }
    if out.contains('.') {
        while out.ends_with('0') {
            out.pop();
        }
        if out.ends_with('.') {
            out.pop();
        }
    }
    out
}

/// Results of one simulation run.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub table: Table,
    pub wr: Option<WrResult>,
    pub mono: Option<CoupledTrajectory>,
}

impl SimulationOutput {
    pub fn wr_status(&self) -> Option<WrStatus> {
        self.wr.as_ref().map(|r| r.status)
    }
}

/// Runs WR and/or the monolithic solver and tabulates the probe potential
/// as columns `t, mon, 1, 2, …`. With both modes the two solves run on
/// separate threads.
pub fn run_simulation(problem: &Problem, cfg: &RunConfig, mode: Mode) -> Result<SimulationOutput, IoError> {
    let opts = cfg.wr_options();
    opts.validate()?;
    let row = problem.circuit.node_row(&cfg.probe).ok_or_else(|| WrError::UnknownProbe(cfg.probe.clone()))?;
    let grid = uniform_grid(cfg.t_start, cfg.t_end, opts.circuit.dt)?;
    let run_wr = || gauss_seidel_wr(&problem.field, &problem.circuit, &problem.x0, &problem.a0, &opts);
    let run_mono =
        || solve_monolithic(&problem.field, &problem.circuit, &problem.x0, &problem.a0, &grid, &opts.circuit);
    let (wr, mono) = match mode {
        Mode::Wr => (Some(run_wr()?), None),
        Mode::Mono => (None, Some(run_mono()?)),
        Mode::Both => std::thread::scope(|s| {
            let mono = s.spawn(run_mono);
            let wr = run_wr();
            let mono = mono.join().expect("monolithic solve panicked");
            Ok::<_, IoError>((Some(wr?), Some(mono?)))
        })?,
    };
    let mut headers = vec!["t".to_string()];
    let mut columns = vec![grid.clone()];
    if let Some(m) = &mono {
        headers.push("mon".into());
        columns.push(m.x.component(row));
    }
    if let Some(r) = &wr {
        let (times, cols) = iterate_history_export(r, &problem.circuit, &cfg.probe)?;
        if times.len() != grid.len() {
            return Err(IoError::Config("WR iterates do not share the output grid".into()));
        }
        for (label, col) in cols {
            headers.push(label);
            columns.push(col);
        }
    }
    debug_assert!(mode.runs_wr() == wr.is_some() && mode.runs_mono() == mono.is_some());
    Ok(SimulationOutput { table: Table { headers, columns }, wr, mono })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(0.0, 12), "0");
        assert_eq!(format_significant(1.0, 12), "1");
        assert_eq!(format_significant(-0.5, 12), "-0.5");
        assert_eq!(format_significant(1.0 / 3.0, 12), "0.333333333333");
        assert_eq!(format_significant(2.0 / 3.0 * 1e-7, 12), "0.0000000666666666667");
        assert_eq!(format_significant(123456789012345.0, 12), "123456789012000");
        assert_eq!(format_significant(99.99999999999999, 12), "100");
        assert_eq!(format_significant(f64::NAN, 12), "NaN");
    }

    #[test]
    fn csv_round_trip() {
        let t = Table {
            headers: vec!["t".into(), "mon".into(), "1".into()],
            columns: vec![vec![0.0, 0.01], vec![1.0 / 7.0, -2.5e-9], vec![3.0, 4e10]],
        };
        let csv = t.to_csv();
        assert!(csv.starts_with("t,mon,1\n"));
        let back = Table::from_csv(&csv).unwrap();
        assert_eq!(back.to_csv(), csv);
        assert!((back.columns[1][0] - 1.0 / 7.0).abs() < 1e-12);
        assert!(Table::from_csv("a,b\n1\n").is_err());
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let cfg = RunConfig::from_json(r#"{"netlist": "a.net"}"#, Path::new("/x")).unwrap();
        assert_eq!(cfg.netlist, PathBuf::from("/x/a.net"));
        assert_eq!((cfg.t_start, cfg.t_end, cfg.dt), (0.0, 0.8, 1e-2));
        assert_eq!(cfg.probe, "n3");
        assert_eq!(cfg.mode, Mode::Both);
        assert!(RunConfig::from_json(r#"{"netlist": "a", "bogus": 1}"#, Path::new(".")).is_err());
        assert!(RunConfig::from_json(r#"{}"#, Path::new(".")).is_err());
        let cfg = RunConfig::from_json(r#"{"netlist": "a", "mode": "monolithic"}"#, Path::new(".")).unwrap();
        assert_eq!(cfg.mode, Mode::Mono);
    }
}
