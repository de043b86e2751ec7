//! Gauss-Seidel waveform relaxation between field and circuit.
//!
//! Starting from the constant extrapolation `v_c⁰(t) ≡ Pᵀx0`, iterate `k`
//! first integrates the field driven by `v_c^{k−1}`, producing `i_m^k`, then
//! the circuit driven by `i_m^k`, producing `x^k` and `v_c^k = Pᵀx^k`. The
//! iteration stops when
//!
//! ```text
//! δ_k = sup_t ‖v_c^k(t) − v_c^{k−1}(t)‖_∞ ≤ wr_tol · (1 + sup_t ‖v_c^k(t)‖_∞)
//! ```
//!
//! and is declared divergent once `δ_k > blowup_factor · δ_1` or a sample
//! stops being finite.

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::field::FieldModel;
use crate::mna::MnaSystem;
use crate::monolithic::consistent_initial_state;
use crate::solver::{uniform_grid, CircuitIntegrator, FieldIntegrator, SolveOptions, SolverError, Waveform};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WrError {
    #[error("invalid WR options: {0}")]
    InvalidOptions(String),
    #[error("WR window {window}, iteration {k}: {error}")]
    Sweep { window: usize, k: usize, error: SolverError },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("probe `{0}` is not a non-ground circuit node")]
    UnknownProbe(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WrStatus {
    Converged(usize),
    Diverged(usize),
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WrOptions {
    pub t_start: f64,
    pub t_end: f64,
    pub wr_tol: f64,
    pub k_max: usize,
    pub blowup_factor: f64,
    /// Number of equal sequential sub-windows.
    pub windows: usize,
    pub field: SolveOptions,
    pub circuit: SolveOptions,
    /// Keep only the last two iterates of each window.
    pub low_memory: bool,
}

impl Default for WrOptions {
    fn default() -> Self {
        WrOptions {
            t_start: 0.0,
            t_end: 0.8,
            wr_tol: 1e-6,
            k_max: 50,
            blowup_factor: 1e4,
            windows: 1,
            field: SolveOptions::default(),
            circuit: SolveOptions::default(),
            low_memory: false,
        }
    }
}

impl WrOptions {
    pub fn validate(&self) -> Result<(), WrError> {
        let bad = |m: &str| Err(WrError::InvalidOptions(m.into()));
        if !(self.t_end > self.t_start) || !self.t_start.is_finite() || !self.t_end.is_finite() {
            return bad("window end must exceed its start");
        }
        if !(self.wr_tol > 0.0) {
            return bad("wr_tol must be positive");
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1");
        }
        if !(self.blowup_factor > 1.0) {
            return bad("blowup_factor must exceed 1");
        }
        if self.windows == 0 {
            return bad("need at least one window");
        }
        self.field.validate()?;
        self.circuit.validate()?;
        Ok(())
    }
}

/// Waveforms of one WR iterate on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WrIterate {
    pub k: usize,
    pub a: Waveform,
    pub i_m: Waveform,
    pub x: Waveform,
    pub v_c: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrWindow {
    pub t_start: f64,
    pub t_end: f64,
    pub status: WrStatus,
    /// The constant initial guess `v_c⁰`.
    pub initial_guess: Waveform,
    /// Circuit state the window started from.
    pub x0: DVector<f64>,
    pub iterates: Vec<WrIterate>,
    /// `δ_k` for `k = 1, 2, …`.
    pub deltas: Vec<f64>,
}

impl WrWindow {
    pub fn last(&self) -> Option<&WrIterate> {
        self.iterates.last()
    }

    /// `δ_{k+1} / δ_k` for consecutive iterates.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.deltas.windows(2).map(|d| d[1] / d[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrResult {
    /// Diverged if any window diverged, MaxIterations if any window hit the
    /// cap, otherwise Converged with the largest per-window count.
    pub status: WrStatus,
    pub windows: Vec<WrWindow>,
}

impl WrResult {
    /// Final iterates of all windows joined into one trajectory.
    pub fn final_iterate(&self) -> Option<WrIterate> {
        let lasts: Vec<&WrIterate> = self.windows.iter().filter_map(WrWindow::last).collect();
        if lasts.is_empty() {
            return None;
        }
        let join = |get: fn(&WrIterate) -> &Waveform| {
            Waveform::concat(&lasts.iter().map(|it| get(it).clone()).collect::<Vec<_>>())
                .expect("windows are contiguous")
        };
        Some(WrIterate {
            k: lasts.iter().map(|it| it.k).max().unwrap_or(0),
            a: join(|it| &it.a),
            i_m: join(|it| &it.i_m),
            x: join(|it| &it.x),
            v_c: join(|it| &it.v_c),
        })
    }

    /// `δ_k` of the first window.
    pub fn deltas(&self) -> &[f64] {
        self.windows.first().map_or(&[], |w| &w.deltas)
    }
}

/// Runs Gauss-Seidel WR on `[t_start, t_end]`.
pub fn gauss_seidel_wr(
    field: &FieldModel,
    circuit: &MnaSystem,
    x0: &DVector<f64>,
    a0: &DVector<f64>,
    opts: &WrOptions,
) -> Result<WrResult, WrError> {
    opts.validate()?;
    let (mut x_start, _) = consistent_initial_state(field, circuit, opts.t_start, x0, a0, &opts.circuit)?;
    let mut a_start = a0.clone();
    let mut field_int = FieldIntegrator::new(field);
    let mut circuit_int = CircuitIntegrator::new(circuit);
    let width = (opts.t_end - opts.t_start) / opts.windows as f64;
    let mut windows = Vec::with_capacity(opts.windows);
    for w in 0..opts.windows {
        let t0 = opts.t_start + w as f64 * width;
        let t1 = if w + 1 == opts.windows { opts.t_end } else { opts.t_start + (w + 1) as f64 * width };
        let field_grid = uniform_grid(t0, t1, opts.field.dt)?;
        let circuit_grid = uniform_grid(t0, t1, opts.circuit.dt)?;
        let guess = Waveform::constant(circuit_grid.clone(), &circuit.port_voltage(&x_start))?;
        let mut window = WrWindow {
            t_start: t0,
            t_end: t1,
            status: WrStatus::MaxIterations,
            initial_guess: guess.clone(),
            x0: x_start.clone(),
            iterates: Vec::new(),
            deltas: Vec::new(),
        };
        let mut v_prev = guess;
        for k in 1..=opts.k_max {
            let sweep = |error| WrError::Sweep { window: w, k, error };
            let ft = field_int.integrate(&v_prev, &a_start, &field_grid, &opts.field).map_err(sweep)?;
            let ct = circuit_int.integrate(&ft.i_m, &x_start, &circuit_grid, &opts.circuit).map_err(sweep)?;
            let delta = ct.v_c.sup_diff(&v_prev)?;
            window.deltas.push(delta);
            let finite = ct.x.is_finite() && ft.a.is_finite() && ft.i_m.is_finite() && delta.is_finite();
            let scale = 1.0 + ct.v_c.sup_norm();
            v_prev = ct.v_c.clone();
            window.iterates.push(WrIterate { k, a: ft.a, i_m: ft.i_m, x: ct.x, v_c: ct.v_c });
            if opts.low_memory && window.iterates.len() > 2 {
                window.iterates.remove(0);
            }
            if !finite || delta > opts.blowup_factor * window.deltas[0] {
                window.status = WrStatus::Diverged(k);
                break;
            }
            if delta <= opts.wr_tol * scale {
                window.status = WrStatus::Converged(k);
                break;
            }
        }
        let status = window.status;
        if let Some(last) = window.last() {
            x_start = last.x.last();
            a_start = last.a.last();
        }
        windows.push(window);
        if matches!(status, WrStatus::Diverged(_)) {
            break;
        }
    }
    let status = overall_status(&windows);
    Ok(WrResult { status, windows })
}

fn overall_status(windows: &[WrWindow]) -> WrStatus {
    if let Some(k) = windows.iter().find_map(|w| match w.status {
        WrStatus::Diverged(k) => Some(k),
        _ => None,
    }) {
        return WrStatus::Diverged(k);
    }
    if windows.iter().any(|w| w.status == WrStatus::MaxIterations) {
        return WrStatus::MaxIterations;
    }
    let k = windows
        .iter()
        .map(|w| match w.status {
            WrStatus::Converged(k) => k,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    WrStatus::Converged(k)
}

/// Labelled value columns, e.g. one per WR iterate.
pub type Columns = Vec<(String, Vec<f64>)>;

/// Probe-node potential per stored iterate: a time column followed by one
/// column per iterate (`"1"`, `"2"`, …). Without any iterate the table holds
/// the initial probe potential as column `"0"`. Windows holding fewer iterates than
/// others repeat their last one.
pub fn iterate_history_export(
    result: &WrResult,
    circuit: &MnaSystem,
    probe: &str,
) -> Result<(Vec<f64>, Columns), WrError> {
    let row = circuit.node_row(probe).ok_or_else(|| WrError::UnknownProbe(probe.to_string()))?;
    let mut times = Vec::new();
    for (w, win) in result.windows.iter().enumerate() {
        let grid = win.iterates.first().map_or(win.initial_guess.times(), |it| it.x.times());
        let skip = usize::from(w > 0);
        times.extend_from_slice(&grid[skip..]);
    }
    let labels: Vec<usize> = {
        let mut ks: Vec<usize> = result.windows.iter().flat_map(|w| w.iterates.iter().map(|it| it.k)).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    if labels.is_empty() {
        let mut col = Vec::new();
        for (w, win) in result.windows.iter().enumerate() {
            let skip = usize::from(w > 0);
            col.extend(std::iter::repeat_n(win.x0[row], win.initial_guess.len() - skip));
        }
        return Ok((times, vec![("0".to_string(), col)]));
    }
    let mut columns = Vec::new();
    for &k in &labels {
        let mut col = Vec::new();
        for (w, win) in result.windows.iter().enumerate() {
            let it = win.iterates.iter().rev().find(|it| it.k <= k).or(win.iterates.first());
            if let Some(it) = it {
                let skip = usize::from(w > 0);
                col.extend(it.x.component(row).into_iter().skip(skip));
            }
        }
        columns.push((k.to_string(), col));
    }
    Ok((times, columns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::CoilInfo;
    use crate::linalg::csc_from_triplets;
    use crate::netlist::parse_netlist;
    use nalgebra::DMatrix;
    use nalgebra_sparse::CscMatrix;

    fn one_dof() -> FieldModel {
        FieldModel::linear(
            CscMatrix::zeros(1, 1),
            csc_from_triplets(1, 1, &[(0, 0, 2.0)]),
            DMatrix::from_element(1, 1, 1.0),
            vec![CoilInfo { name: "c".into(), turns: 1.0 }],
        )
        .unwrap()
    }

    const CIRCUIT_A: &str = "\
.source qv 0 (1,1,0) (1,20,0)
.source qi 0 (1,2,0) (5,20,0)
.field EM f
V1 0 n3 qv
I1 n3 n4 qi
L1 n4 n2 5
R1 n2 0 1
C1 n3 n2 1
M1 0 n2 EM
";

    fn circuit(text: &str) -> MnaSystem {
        MnaSystem::from_netlist(&parse_netlist(text).unwrap())
    }

    #[test]
    fn no_ports_converges_immediately() {
        let sys = circuit(".source s 0 (1,3,0)\nV1 1 0 s\nR1 1 2 1\nC1 2 0 1");
        let r = gauss_seidel_wr(
            &FieldModel::empty(),
            &sys,
            &DVector::zeros(sys.dim()),
            &DVector::zeros(0),
            &WrOptions::default(),
        )
        .unwrap();
        assert_eq!(r.status, WrStatus::Converged(1));
        assert_eq!(r.deltas(), &[0.0]);
    }

    #[test]
    fn convergent_topology_converges() {
        let sys = circuit(CIRCUIT_A);
        let r =
            gauss_seidel_wr(&one_dof(), &sys, &DVector::zeros(sys.dim()), &DVector::zeros(1), &WrOptions::default())
                .unwrap();
        assert!(matches!(r.status, WrStatus::Converged(k) if k <= 20), "{:?}", r.status);
    }

    #[test]
    fn divergent_topology_blows_up() {
        let sys = circuit(&CIRCUIT_A.replace("M1 0 n2 EM", "M1 0 n4 EM"));
        // L_eq = 1/2 against L1 = 5 amplifies each sweep about tenfold.
        let r =
            gauss_seidel_wr(&one_dof(), &sys, &DVector::zeros(sys.dim()), &DVector::zeros(1), &WrOptions::default())
                .unwrap();
        assert!(matches!(r.status, WrStatus::Diverged(_)), "{:?}", r.status);
        assert!(r.windows[0].contraction_ratios().iter().skip(1).all(|&q| q > 5.0));
    }

    #[test]
    fn low_memory_keeps_two_iterates() {
        let sys = circuit(CIRCUIT_A);
        let opts = WrOptions { low_memory: true, ..WrOptions::default() };
        let r = gauss_seidel_wr(&one_dof(), &sys, &DVector::zeros(sys.dim()), &DVector::zeros(1), &opts).unwrap();
        assert!(r.windows[0].iterates.len() <= 2);
        let full =
            gauss_seidel_wr(&one_dof(), &sys, &DVector::zeros(sys.dim()), &DVector::zeros(1), &WrOptions::default())
                .unwrap();
        assert_eq!(r.final_iterate(), full.final_iterate());
    }

    #[test]
    fn history_export_columns() {
        let sys = circuit(CIRCUIT_A);
        let r =
            gauss_seidel_wr(&one_dof(), &sys, &DVector::zeros(sys.dim()), &DVector::zeros(1), &WrOptions::default())
                .unwrap();
        let (t, cols) = iterate_history_export(&r, &sys, "n3").unwrap();
        assert_eq!(t.len(), 81);
        assert_eq!(cols[0].0, "1");
        assert_eq!(cols.len(), r.windows[0].iterates.len());
        assert!(matches!(iterate_history_export(&r, &sys, "0"), Err(WrError::UnknownProbe(_))));
        assert!(matches!(iterate_history_export(&r, &sys, "zz"), Err(WrError::UnknownProbe(_))));

        let empty = WrResult {
            status: WrStatus::MaxIterations,
            windows: vec![WrWindow { iterates: vec![], deltas: vec![], ..r.windows[0].clone() }],
        };
        let (_, cols) = iterate_history_export(&empty, &sys, "n3").unwrap();
        assert_eq!(cols.len(), 1);
        assert_eq!(cols[0].0, "0");
    }

    #[test]
    fn rejects_bad_options() {
        let sys = circuit(CIRCUIT_A);
        for opts in [
            WrOptions { t_end: 0.0, ..WrOptions::default() },
            WrOptions { wr_tol: 0.0, ..WrOptions::default() },
            WrOptions { k_max: 0, ..WrOptions::default() },
            WrOptions { blowup_factor: 1.0, ..WrOptions::default() },
            WrOptions { windows: 0, ..WrOptions::default() },
        ] {
            let r = gauss_seidel_wr(&one_dof(), &sys, &DVector::zeros(sys.dim()), &DVector::zeros(1), &opts);
            assert!(matches!(r, Err(WrError::InvalidOptions(_))));
        }
    }
}
