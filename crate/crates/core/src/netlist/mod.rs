//! Circuit netlists: data model, text grammar, and MNA incidence matrices.
//!
//! One element per line, `<NAME> <node+> <node-> <value|source-id|field-ref>`.
//! The first letter of the name selects the kind (`R`, `C`, `L`, `V`, `I`,
//! and `M` for a field port). Resistors carry a conductance in siemens.
//! Node `0` is ground. Directives:
//!
//! ```text
//! .source <id> <offset> (<amp>,<omega>,<phase>) ...
//! .field  <id> <builtin-name-or-path>
//! ```
//!
//! A field reference is `<field-id>` (coil 0) or `<field-id>:<coil>`.

mod incidence;
mod parse;

pub use incidence::{build_incidence, IncidenceSet};
pub use parse::{parse_netlist, serialize_netlist};

use std::collections::BTreeMap;

use thiserror::Error;

/// Name of the ground node.
pub const GROUND: &str = "0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("empty netlist")]
    Empty,
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate element name `{name}`")]
    DuplicateElement { line: usize, name: String },
    #[error("line {line}: element `{name}` has non-positive value {value}")]
    NonPositiveValue { line: usize, name: String, value: f64 },
    #[error("line {line}: element `{name}` references undeclared source `{id}`")]
    UnknownSource { line: usize, name: String, id: String },
    #[error("line {line}: element `{name}` references undeclared field model `{id}`")]
    UnknownField { line: usize, name: String, id: String },
    #[error("line {line}: duplicate directive for `{id}`")]
    DuplicateDirective { line: usize, id: String },
    #[error("netlist has no ground node `0`")]
    MissingGround,
    #[error("node `{node}` is not connected to ground")]
    Disconnected { node: String },
    #[error("line {line}: element `{name}` connects node `{node}` to itself")]
    SelfLoop { line: usize, name: String, node: String },
}

/// One sinusoidal term `amplitude · sin(omega · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
}

/// Independent source waveform: constant offset plus a sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceSpec {
    pub offset: f64,
    pub terms: Vec<Sinusoid>,
}

impl SourceSpec {
    pub fn constant(offset: f64) -> Self {
        SourceSpec { offset, terms: Vec::new() }
    }

    pub fn sines(terms: &[(f64, f64)]) -> Self {
        SourceSpec {
            offset: 0.0,
            terms: terms.iter().map(|&(amplitude, omega)| Sinusoid { amplitude, omega, phase: 0.0 }).collect(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.offset + self.terms.iter().map(|s| s.amplitude * (s.omega * t + s.phase).sin()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ElementKind {
    /// Conductance in siemens.
    Resistor(f64),
    /// Capacitance in farads.
    Capacitor(f64),
    /// Inductance in henries.
    Inductor(f64),
    VoltageSource(String),
    CurrentSource(String),
    FieldPort {
        field: String,
        coil: usize,
    },
}

impl ElementKind {
    pub fn prefix(&self) -> char {
        match self {
            ElementKind::Resistor(_) => 'R',
            ElementKind::Capacitor(_) => 'C',
            ElementKind::Inductor(_) => 'L',
            ElementKind::VoltageSource(_) => 'V',
            ElementKind::CurrentSource(_) => 'I',
            ElementKind::FieldPort { .. } => 'M',
        }
    }

    /// Capacitor, voltage source or resistor.
    pub fn is_cvr(&self) -> bool {
        matches!(self, ElementKind::Resistor(_) | ElementKind::Capacitor(_) | ElementKind::VoltageSource(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// Index into [`Netlist::nodes`] of the `+` (from) terminal.
    pub from: usize,
    /// Index into [`Netlist::nodes`] of the `−` (to) terminal.
    pub to: usize,
}

/// A validated circuit graph.
///
/// `nodes` lists node names in order of first appearance, ground included.
#[derive(Debug, Clone, PartialEq)]
pub struct Netlist {
    pub nodes: Vec<String>,
    pub elements: Vec<Element>,
    pub sources: BTreeMap<String, SourceSpec>,
    /// Field model id → builtin name or path, as written in `.field`.
    pub fields: BTreeMap<String, String>,
}

impl Netlist {
    pub fn ground(&self) -> usize {
        self.node_index(GROUND).expect("validated netlist has ground")
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Non-ground node names in incidence row order.
    pub fn non_ground_nodes(&self) -> Vec<&str> {
        self.nodes.iter().filter(|n| *n != GROUND).map(String::as_str).collect()
    }

    pub fn field_ports(&self) -> impl Iterator<Item = &Element> {
        self.elements.iter().filter(|e| matches!(e.kind, ElementKind::FieldPort { .. }))
    }

    /// Checks ground presence and connectivity (element kinds ignored).
    pub fn check_connected(&self) -> Result<(), NetlistError> {
        let ground = self.node_index(GROUND).ok_or(NetlistError::MissingGround)?;
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.elements {
            adj[e.from].push(e.to);
            adj[e.to].push(e.from);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![ground];
        seen[ground] = true;
        while let Some(n) = stack.pop() {
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(NetlistError::Disconnected { node: self.nodes[i].clone() }),
            None => Ok(()),
        }
    }
}
