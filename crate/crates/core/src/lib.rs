//! Field/circuit co-simulation by Gauss-Seidel waveform relaxation.
//!
//! The crate couples a space-discrete magnetoquasistatic field model
//! (`M ȧ + K(a) a − X i_m = 0`, `Xᵀ ȧ = v_c`) to a circuit described by
//! modified nodal analysis and integrates the pair either monolithically or
//! by waveform relaxation (WR). A static topology check predicts whether WR
//! is guaranteed to converge: every field port needs a parallel path made of
//! capacitors, voltage sources and resistors only (a *CVR path*).
//!
//! Module map:
//!
//! - [`netlist`]: text netlist parser/emitter and incidence matrices
//! - [`topology`]: CVR-path search, rank criteria, convergence prediction
//! - [`mna`]: circuit DAE evaluators `E(x)`, `f(t, x)`, `P`
//! - [`field`]: FE assembly, MatrixMarket ingestion, assumption checks
//! - [`solver`]: waveforms, Newton, implicit-Euler subsystem integrators
//! - [`wr`]: the Gauss-Seidel WR driver
//! - [`monolithic`]: reference solve of the fully coupled system
//! - [`io`]: run configuration, problem setup and CSV output

// `!(x > 0.0)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod field;
pub mod io;
pub mod linalg;
pub mod mna;
pub mod monolithic;
pub mod netlist;
pub mod solver;
pub mod topology;
pub mod wr;

pub use field::FieldModel;
pub use mna::MnaSystem;
pub use netlist::{IncidenceSet, Netlist};
pub use solver::{SolveOptions, Waveform};
pub use topology::{Prediction, TopologyReport};
pub use wr::{WrOptions, WrResult, WrStatus};
