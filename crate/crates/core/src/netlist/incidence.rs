use nalgebra::DMatrix;

use super::{ElementKind, Netlist};

/// Reduced node–branch incidence matrices, one per element kind.
///
/// Rows are non-ground nodes in first-appearance order. A branch column holds
/// `+1` at its from-node and `−1` at its to-node; the ground entry is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSet {
    pub nodes: Vec<String>,
    pub a_c: DMatrix<f64>,
    pub a_r: DMatrix<f64>,
    pub a_l: DMatrix<f64>,
    pub a_v: DMatrix<f64>,
    pub a_i: DMatrix<f64>,
    pub a_m: DMatrix<f64>,
    /// Element indices (into the netlist) per column, kind by kind.
    pub branches: BranchIndex,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BranchIndex {
    pub capacitors: Vec<usize>,
    pub resistors: Vec<usize>,
    pub inductors: Vec<usize>,
    pub voltage_sources: Vec<usize>,
    pub current_sources: Vec<usize>,
    pub ports: Vec<usize>,
}

impl IncidenceSet {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn row_of(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }

    /// `(A_C A_R A_L A_V A_I A_m)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        crate::linalg::hstack(self.node_count(), &[&self.a_c, &self.a_r, &self.a_l, &self.a_v, &self.a_i, &self.a_m])
    }
}

pub fn build_incidence(netlist: &Netlist) -> IncidenceSet {
    let ground = netlist.ground();
    let row: Vec<Option<usize>> = {
        let mut next = 0;
        (0..netlist.nodes.len())
            .map(|i| {
                if i == ground {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let nodes: Vec<String> = netlist.non_ground_nodes().into_iter().map(String::from).collect();

    let mut idx = BranchIndex::default();
    for (k, e) in netlist.elements.iter().enumerate() {
        match e.kind {
            ElementKind::Capacitor(_) => idx.capacitors.push(k),
            ElementKind::Resistor(_) => idx.resistors.push(k),
            ElementKind::Inductor(_) => idx.inductors.push(k),
            ElementKind::VoltageSource(_) => idx.voltage_sources.push(k),
            ElementKind::CurrentSource(_) => idx.current_sources.push(k),
            ElementKind::FieldPort { .. } => idx.ports.push(k),
        }
    }
    let build = |cols: &[usize]| {
        let mut a = DMatrix::zeros(nodes.len(), cols.len());
        for (j, &k) in cols.iter().enumerate() {
            let e = &netlist.elements[k];
            if let Some(r) = row[e.from] {
                a[(r, j)] += 1.0;
            }
            if let Some(r) = row[e.to] {
                a[(r, j)] -= 1.0;
            }
        }
        a
    };
    IncidenceSet {
        a_c: build(&idx.capacitors),
        a_r: build(&idx.resistors),
        a_l: build(&idx.inductors),
        a_v: build(&idx.voltage_sources),
        a_i: build(&idx.current_sources),
        a_m: build(&idx.ports),
        nodes,
        branches: idx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    const CIRCUIT_A: &str = "\
.source qv 0 (1,1,0) (1,20,0)
.source qi 0 (1,2,0) (5,20,0)
.field EM transformer-lite
V1 0 n3 qv
I1 n3 n4 qi
L1 n4 n2 5
R1 n2 0 1
C1 n3 n2 1
M1 0 n2 EM
";

    fn col(a: &DMatrix<f64>, inc: &IncidenceSet) -> Vec<(String, f64)> {
        assert_eq!(a.ncols(), 1);
        (0..a.nrows()).filter(|&r| a[(r, 0)] != 0.0).map(|r| (inc.nodes[r].clone(), a[(r, 0)])).collect()
    }

    #[test]
    fn benchmark_a_incidence_by_hand() {
        let inc = build_incidence(&parse_netlist(CIRCUIT_A).unwrap());
        assert_eq!(inc.node_count(), 3);
        assert_eq!(col(&inc.a_v, &inc), vec![("n3".into(), -1.0)]);
        assert_eq!(col(&inc.a_m, &inc), vec![("n2".into(), -1.0)]);
        assert_eq!(col(&inc.a_r, &inc), vec![("n2".into(), 1.0)]);
        assert_eq!(col(&inc.a_c, &inc), vec![("n3".into(), 1.0), ("n2".into(), -1.0)]);
        assert_eq!(col(&inc.a_l, &inc), vec![("n4".into(), 1.0), ("n2".into(), -1.0)]);
        assert_eq!(col(&inc.a_i, &inc), vec![("n3".into(), 1.0), ("n4".into(), -1.0)]);
    }

    #[test]
    fn benchmark_b_port_at_n4() {
        let text = CIRCUIT_A.replace("M1 0 n2 EM", "M1 0 n4 EM");
        let inc = build_incidence(&parse_netlist(&text).unwrap());
        assert_eq!(col(&inc.a_m, &inc), vec![("n4".into(), -1.0)]);
    }

    #[test]
    fn single_resistor() {
        let inc = build_incidence(&parse_netlist("R1 1 0 1.0").unwrap());
        assert_eq!(inc.a_r, DMatrix::from_element(1, 1, 1.0));
        for a in [&inc.a_c, &inc.a_l, &inc.a_v, &inc.a_i, &inc.a_m] {
            assert_eq!(a.shape(), (1, 0));
        }
    }
}
