//! Static convergence analysis of the WR coupling.
//!
//! WR is guaranteed to converge when every field port has a *parallel CVR
//! path*: its two terminals are joined by a path of capacitors, voltage
//! sources and resistors only. The graph search is cross-checked with an
//! algebraic criterion: each column of `A_m` must lie in the column span of
//! `(A_C A_V A_R)`. Failing the criterion removes the guarantee; it does not
//! prove divergence.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{hstack, rank};
use crate::netlist::{build_incidence, ElementKind, IncidenceSet, Netlist};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("element `{0}` is not a field port")]
    NotAPort(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Prediction {
    GuaranteedConvergent,
    NotGuaranteed,
}

/// Outcome of the source-loop / current-cutset check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceTopology {
    /// `A_V` has full column rank (no loops of voltage sources).
    pub voltage_sources_independent: bool,
    /// `(A_C A_V A_R A_L)` has full row rank (no cutsets of current sources
    /// and field ports).
    pub no_current_cutsets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortReport {
    pub name: String,
    /// Node names along a shortest CVR path; empty when the terminals coincide.
    pub cvr_path: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyReport {
    pub ports: Vec<PortReport>,
    pub assumption2c: SourceTopology,
    pub prediction: Prediction,
    pub algebraic_criterion: bool,
}

impl TopologyReport {
    /// Graph and rank criteria give the same verdict.
    pub fn criteria_agree(&self) -> bool {
        (self.prediction == Prediction::GuaranteedConvergent) == self.algebraic_criterion
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Json<'a> {
            ports: Vec<&'a str>,
            cvr_paths: BTreeMap<&'a str, &'a Option<Vec<String>>>,
            prediction: Prediction,
            assumption2c: SourceTopology,
            algebraic_criterion: bool,
        }
        serde_json::to_value(Json {
            ports: self.ports.iter().map(|p| p.name.as_str()).collect(),
            cvr_paths: self.ports.iter().map(|p| (p.name.as_str(), &p.cvr_path)).collect(),
            prediction: self.prediction,
            assumption2c: self.assumption2c,
            algebraic_criterion: self.algebraic_criterion,
        })
        .expect("report serializes")
    }
}

impl fmt::Display for TopologyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "field ports: {}", self.ports.len())?;
        for p in &self.ports {
            match &p.cvr_path {
                Some(path) if path.is_empty() => writeln!(f, "  {}: terminals coincide (trivial CVR path)", p.name)?,
                Some(path) => writeln!(f, "  {}: parallel CVR path {}", p.name, path.join(" - "))?,
                None => writeln!(f, "  {}: no parallel CVR path", p.name)?,
            }
        }
        let yn = |b: bool| if b { "ok" } else { "VIOLATED" };
        writeln!(
            f,
            "voltage sources independent (A_V full column rank): {}",
            yn(self.assumption2c.voltage_sources_independent)
        )?;
        writeln!(
            f,
            "no current-source cutsets ((A_C A_V A_R A_L) full row rank): {}",
            yn(self.assumption2c.no_current_cutsets)
        )?;
        writeln!(
            f,
            "algebraic criterion (A_m in span(A_C A_V A_R)): {}",
            if self.algebraic_criterion { "holds" } else { "fails" }
        )?;
        match self.prediction {
            Prediction::GuaranteedConvergent => {
                writeln!(f, "prediction: WR convergence guaranteed")?
            }
            Prediction::NotGuaranteed => writeln!(
                f,
                "prediction: WR convergence NOT guaranteed (sufficient criterion fails; divergence is possible, not certain)"
            )?,
        }
        if !self.criteria_agree() {
            writeln!(f, "warning: graph and algebraic criteria disagree")?;
        }
        Ok(())
    }
}

/// Shortest CVR path (in branch count) between the terminals of `port`.
///
/// Branch orientation is ignored. Ties are broken by element order, so the
/// result is deterministic.
pub fn find_cvr_path(netlist: &Netlist, port: &str) -> Result<Option<Vec<String>>, TopologyError> {
    let el = netlist.element(port).ok_or_else(|| TopologyError::UnknownElement(port.to_string()))?;
    if !matches!(el.kind, ElementKind::FieldPort { .. }) {
        return Err(TopologyError::NotAPort(port.to_string()));
    }
    if el.from == el.to {
        return Ok(Some(Vec::new()));
    }
    let n = netlist.nodes.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in netlist.elements.iter().filter(|e| e.kind.is_cvr()) {
        adj[e.from].push(e.to);
        adj[e.to].push(e.from);
    }
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::from([el.from]);
    prev[el.from] = el.from;
    while let Some(u) = queue.pop_front() {
        if u == el.to {
            break;
        }
        for &v in &adj[u] {
            if prev[v] == usize::MAX {
                prev[v] = u;
                queue.push_back(v);
            }
        }
    }
    if prev[el.to] == usize::MAX {
        return Ok(None);
    }
    let mut path = vec![el.to];
    let mut cur = el.to;
    while cur != el.from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Ok(Some(path.into_iter().map(|i| netlist.nodes[i].clone()).collect()))
}

/// `rank(A_C A_V A_R) = rank(A_C A_V A_R A_m)`.
pub fn algebraic_criterion(inc: &IncidenceSet) -> bool {
    if inc.a_m.ncols() == 0 {
        return true;
    }
    let rows = inc.node_count();
    let cvr = hstack(rows, &[&inc.a_c, &inc.a_v, &inc.a_r]);
    let with_ports = hstack(rows, &[&cvr, &inc.a_m]);
    rank(&cvr) == rank(&with_ports)
}

pub fn check_assumption2c(inc: &IncidenceSet) -> SourceTopology {
    let rows = inc.node_count();
    let all = hstack(rows, &[&inc.a_c, &inc.a_v, &inc.a_r, &inc.a_l]);
    SourceTopology {
        voltage_sources_independent: rank(&inc.a_v) == inc.a_v.ncols(),
        no_current_cutsets: rank(&all) == rows,
    }
}

pub fn analyze(netlist: &Netlist) -> Result<TopologyReport, TopologyError> {
    let inc = build_incidence(netlist);
    let ports = netlist
        .field_ports()
        .map(|p| Ok(PortReport { name: p.name.clone(), cvr_path: find_cvr_path(netlist, &p.name)? }))
        .collect::<Result<Vec<_>, TopologyError>>()?;
    let prediction = if ports.iter().all(|p| p.cvr_path.is_some()) {
        Prediction::GuaranteedConvergent
    } else {
        Prediction::NotGuaranteed
    };
    Ok(TopologyReport {
        ports,
        assumption2c: check_assumption2c(&inc),
        prediction,
        algebraic_criterion: algebraic_criterion(&inc),
    })
}
