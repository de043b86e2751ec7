//! Modified nodal analysis of the circuit part.
//!
//! The circuit DAE is `E(x) ẋ + f(t, x) + P i_m = 0` with `x = (e, i_L, i_V)`:
//!
//! ```text
//! E(x) = diag(A_C C(A_Cᵀe) A_Cᵀ, −L(i_L), 0)
//! f    = (A_R g(A_Rᵀe) + A_L i_L + A_V i_V + A_I q_i(t),  A_Lᵀe,  A_Vᵀe − q_v(t))
//! P    = (A_m, 0, 0)
//! ```
//!
//! `i_m` is the branch current of each field port, oriented from its `+` to
//! its `−` terminal like every other branch, and the port voltage is
//! `v_c = Pᵀx = A_mᵀe`. With this orientation the field port absorbs
//! `v_c · i_m`, the same power the field equations account for.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::netlist::{build_incidence, ElementKind, IncidenceSet, Netlist, SourceSpec};

/// Sampling range used to check monotonicity / positivity of nonlinear laws.
pub const LAW_CHECK_RANGE: f64 = 100.0;
const LAW_CHECK_SAMPLES: usize = 401;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MnaError {
    #[error("no {kind} named `{name}`")]
    UnknownElement { kind: &'static str, name: String },
    #[error("law for `{name}` violates passivity: {reason}")]
    NotPassive { name: String, reason: String },
}

/// Current through a resistive branch as a function of its voltage.
#[derive(Debug, Clone, PartialEq)]
pub enum CurrentLaw {
    /// `g(u) = G u`.
    Linear(f64),
    /// `g(u) = Σ c_k u^k`.
    Polynomial(Vec<f64>),
}

/// Capacitance of a branch as a function of its voltage, or inductance as a
/// function of its current.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterLaw {
    Constant(f64),
    Polynomial(Vec<f64>),
}

fn poly(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck)
}

fn poly_deriv(c: &[f64], u: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &ck)| acc * u + k as f64 * ck)
}

impl CurrentLaw {
    pub fn current(&self, u: f64) -> f64 {
        match self {
            CurrentLaw::Linear(g) => g * u,
            CurrentLaw::Polynomial(c) => poly(c, u),
        }
    }

    pub fn slope(&self, u: f64) -> f64 {
        match self {
            CurrentLaw::Linear(g) => *g,
            CurrentLaw::Polynomial(c) => poly_deriv(c, u),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, CurrentLaw::Linear(_))
    }
}

impl ParameterLaw {
    pub fn value(&self, u: f64) -> f64 {
        match self {
            ParameterLaw::Constant(v) => *v,
            ParameterLaw::Polynomial(c) => poly(c, u),
        }
    }

    pub fn slope(&self, u: f64) -> f64 {
        match self {
            ParameterLaw::Constant(_) => 0.0,
            ParameterLaw::Polynomial(c) => poly_deriv(c, u),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ParameterLaw::Constant(_))
    }
}

fn law_samples() -> impl Iterator<Item = f64> {
    let n = LAW_CHECK_SAMPLES - 1;
    (0..=n).map(move |k| -LAW_CHECK_RANGE + 2.0 * LAW_CHECK_RANGE * k as f64 / n as f64)
}

/// How derivatives of the circuit equations are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// Analytic for linear laws, central differences otherwise.
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
}

/// Treatment of `E(x)` in the implicit-Euler Newton matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ELinearization {
    /// Full for constant `C`, `L`; simplified otherwise.
    #[default]
    Auto,
    /// Includes `∂(E(x)w)/∂x`.
    Full,
    /// Drops the product-rule term.
    Simplified,
}

/// Block sizes of the stacked circuit state `x = (e, i_L, i_V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircuitLayout {
    pub nodes: usize,
    pub inductors: usize,
    pub voltage_sources: usize,
}

impl CircuitLayout {
    pub fn dim(&self) -> usize {
        self.nodes + self.inductors + self.voltage_sources
    }
    pub fn inductor_offset(&self) -> usize {
        self.nodes
    }
    pub fn vsource_offset(&self) -> usize {
        self.nodes + self.inductors
    }
}

/// Evaluators for the circuit DAE. Immutable once the laws are set.
#[derive(Debug, Clone)]
pub struct MnaSystem {
    inc: IncidenceSet,
    conductances: Vec<CurrentLaw>,
    capacitances: Vec<ParameterLaw>,
    inductances: Vec<ParameterLaw>,
    voltage_sources: Vec<SourceSpec>,
    current_sources: Vec<SourceSpec>,
    names: BranchNames,
}

#[derive(Debug, Clone, Default)]
struct BranchNames {
    resistors: Vec<String>,
    capacitors: Vec<String>,
    inductors: Vec<String>,
    ports: Vec<String>,
}

impl MnaSystem {
    /// Linear element laws taken from the netlist values.
    pub fn from_netlist(netlist: &Netlist) -> Self {
        let inc = build_incidence(netlist);
        let el = |k: usize| &netlist.elements[k];
        let value = |k: usize| match el(k).kind {
            ElementKind::Resistor(v) | ElementKind::Capacitor(v) | ElementKind::Inductor(v) => v,
            _ => unreachable!("branch index holds passive elements"),
        };
        let source = |k: usize| match &el(k).kind {
            ElementKind::VoltageSource(id) | ElementKind::CurrentSource(id) => netlist.sources[id].clone(),
            _ => unreachable!("branch index holds sources"),
        };
        let b = &inc.branches;
        let names = BranchNames {
            resistors: b.resistors.iter().map(|&k| el(k).name.clone()).collect(),
            capacitors: b.capacitors.iter().map(|&k| el(k).name.clone()).collect(),
            inductors: b.inductors.iter().map(|&k| el(k).name.clone()).collect(),
            ports: b.ports.iter().map(|&k| el(k).name.clone()).collect(),
        };
        MnaSystem {
            conductances: b.resistors.iter().map(|&k| CurrentLaw::Linear(value(k))).collect(),
            capacitances: b.capacitors.iter().map(|&k| ParameterLaw::Constant(value(k))).collect(),
            inductances: b.inductors.iter().map(|&k| ParameterLaw::Constant(value(k))).collect(),
            voltage_sources: b.voltage_sources.iter().map(|&k| source(k)).collect(),
            current_sources: b.current_sources.iter().map(|&k| source(k)).collect(),
            names,
            inc,
        }
    }

    /// Replaces a resistor's law; the law must be strongly increasing.
    pub fn set_conductance_law(&mut self, name: &str, law: CurrentLaw) -> Result<(), MnaError> {
        let idx = find(&self.names.resistors, name, "resistor")?;
        if let Some(u) = law_samples().find(|&u| !(law.slope(u) > 0.0)) {
            return Err(MnaError::NotPassive {
                name: name.into(),
                reason: format!("g'({u}) = {} is not positive", law.slope(u)),
            });
        }
        self.conductances[idx] = law;
        Ok(())
    }

    pub fn set_capacitance_law(&mut self, name: &str, law: ParameterLaw) -> Result<(), MnaError> {
        let idx = find(&self.names.capacitors, name, "capacitor")?;
        check_positive(name, &law)?;
        self.capacitances[idx] = law;
        Ok(())
    }

    pub fn set_inductance_law(&mut self, name: &str, law: ParameterLaw) -> Result<(), MnaError> {
        let idx = find(&self.names.inductors, name, "inductor")?;
        check_positive(name, &law)?;
        self.inductances[idx] = law;
        Ok(())
    }

    pub fn incidence(&self) -> &IncidenceSet {
        &self.inc
    }

    pub fn layout(&self) -> CircuitLayout {
        CircuitLayout {
            nodes: self.inc.node_count(),
            inductors: self.inc.a_l.ncols(),
            voltage_sources: self.inc.a_v.ncols(),
        }
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn port_count(&self) -> usize {
        self.inc.a_m.ncols()
    }

    pub fn port_names(&self) -> &[String] {
        &self.names.ports
    }

    pub fn is_linear(&self) -> bool {
        self.conductances.iter().all(CurrentLaw::is_linear)
            && self.capacitances.iter().all(ParameterLaw::is_constant)
            && self.inductances.iter().all(ParameterLaw::is_constant)
    }

    pub fn has_constant_storage(&self) -> bool {
        self.capacitances.iter().all(ParameterLaw::is_constant)
            && self.inductances.iter().all(ParameterLaw::is_constant)
    }

    /// Potential of a named node in state `x`; ground reads as 0.
    pub fn node_row(&self, node: &str) -> Option<usize> {
        self.inc.row_of(node)
    }

    /// `P = (A_m, 0, 0)`.
    pub fn port_matrix(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim(), self.port_count());
        p.view_mut((0, 0), (self.inc.node_count(), self.port_count())).copy_from(&self.inc.a_m);
        p
    }

    /// `v_c = Pᵀx`.
    pub fn port_voltage(&self, x: &DVector<f64>) -> DVector<f64> {
        let e = x.rows(0, self.inc.node_count());
        self.inc.a_m.tr_mul(&e)
    }

    pub fn eval_e(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let lay = self.layout();
        let mut m = DMatrix::zeros(lay.dim(), lay.dim());
        let e = x.rows(0, lay.nodes);
        let u = self.inc.a_c.tr_mul(&e);
        let c = DVector::from_iterator(u.len(), u.iter().zip(&self.capacitances).map(|(&ub, law)| law.value(ub)));
        let lc = &self.inc.a_c * DMatrix::from_diagonal(&c) * self.inc.a_c.transpose();
        m.view_mut((0, 0), (lay.nodes, lay.nodes)).copy_from(&lc);
        let il = x.rows(lay.inductor_offset(), lay.inductors);
        for (b, law) in self.inductances.iter().enumerate() {
            let k = lay.inductor_offset() + b;
            m[(k, k)] = -law.value(il[b]);
        }
        m
    }

    /// Current-source values routed to node rows: `A_I q_i(t)`.
    pub fn current_injection(&self, t: f64) -> DVector<f64> {
        let q = DVector::from_iterator(self.current_sources.len(), self.current_sources.iter().map(|s| s.eval(t)));
        &self.inc.a_i * q
    }

    pub fn eval_f(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let lay = self.layout();
        let e = x.rows(0, lay.nodes);
        let il = x.rows(lay.inductor_offset(), lay.inductors);
        let iv = x.rows(lay.vsource_offset(), lay.voltage_sources);
        let u = self.inc.a_r.tr_mul(&e);
        let g = DVector::from_iterator(u.len(), u.iter().zip(&self.conductances).map(|(&ub, law)| law.current(ub)));
        let node_rows = &self.inc.a_r * g + &self.inc.a_l * il + &self.inc.a_v * iv + self.current_injection(t);
        let l_rows = self.inc.a_l.tr_mul(&e);
        let qv = DVector::from_iterator(self.voltage_sources.len(), self.voltage_sources.iter().map(|s| s.eval(t)));
        let v_rows = self.inc.a_v.tr_mul(&e) - qv;
        let mut f = DVector::zeros(lay.dim());
        f.rows_mut(0, lay.nodes).copy_from(&node_rows);
        f.rows_mut(lay.inductor_offset(), lay.inductors).copy_from(&l_rows);
        f.rows_mut(lay.vsource_offset(), lay.voltage_sources).copy_from(&v_rows);
        f
    }

    fn use_analytic(&self, mode: JacobianMode) -> bool {
        match mode {
            JacobianMode::Auto => self.is_linear(),
            JacobianMode::Analytic => true,
            JacobianMode::FiniteDifference => false,
        }
    }

    /// `∂f/∂x`.
    pub fn jacobian_f(&self, t: f64, x: &DVector<f64>, mode: JacobianMode) -> DMatrix<f64> {
        if !self.use_analytic(mode) {
            return central_difference(x, |y| self.eval_f(t, y));
        }
        let lay = self.layout();
        let mut j = DMatrix::zeros(lay.dim(), lay.dim());
        let e = x.rows(0, lay.nodes);
        let u = self.inc.a_r.tr_mul(&e);
        let slopes = DVector::from_iterator(u.len(), u.iter().zip(&self.conductances).map(|(&ub, law)| law.slope(ub)));
        let gr = &self.inc.a_r * DMatrix::from_diagonal(&slopes) * self.inc.a_r.transpose();
        j.view_mut((0, 0), (lay.nodes, lay.nodes)).copy_from(&gr);
        j.view_mut((0, lay.inductor_offset()), (lay.nodes, lay.inductors)).copy_from(&self.inc.a_l);
        j.view_mut((0, lay.vsource_offset()), (lay.nodes, lay.voltage_sources)).copy_from(&self.inc.a_v);
        j.view_mut((lay.inductor_offset(), 0), (lay.inductors, lay.nodes)).copy_from(&self.inc.a_l.transpose());
        j.view_mut((lay.vsource_offset(), 0), (lay.voltage_sources, lay.nodes)).copy_from(&self.inc.a_v.transpose());
        j
    }

    /// `∂(E(x) w)/∂x` for a fixed `w`.
    pub fn jacobian_e_product(&self, x: &DVector<f64>, w: &DVector<f64>, mode: JacobianMode) -> DMatrix<f64> {
        let lay = self.layout();
        if self.has_constant_storage() {
            return DMatrix::zeros(lay.dim(), lay.dim());
        }
        if !self.use_analytic(mode) {
            return central_difference(x, |y| self.eval_e(y) * w);
        }
        let mut j = DMatrix::zeros(lay.dim(), lay.dim());
        let e = x.rows(0, lay.nodes);
        let u = self.inc.a_c.tr_mul(&e);
        let du = self.inc.a_c.tr_mul(&w.rows(0, lay.nodes));
        let d = DVector::from_iterator(u.len(), (0..u.len()).map(|b| self.capacitances[b].slope(u[b]) * du[b]));
        let block = &self.inc.a_c * DMatrix::from_diagonal(&d) * self.inc.a_c.transpose();
        j.view_mut((0, 0), (lay.nodes, lay.nodes)).copy_from(&block);
        for (b, law) in self.inductances.iter().enumerate() {
            let k = lay.inductor_offset() + b;
            j[(k, k)] = -law.slope(x[k]) * w[k];
        }
        j
    }

    /// Implicit-Euler residual `E(x)(x − x_prev)/δt + f(t, x) + P i_m`.
    pub fn implicit_euler_residual(
        &self,
        t: f64,
        x: &DVector<f64>,
        x_prev: &DVector<f64>,
        dt: f64,
        i_m: &DVector<f64>,
    ) -> DVector<f64> {
        let xdot = (x - x_prev) / dt;
        let mut r = self.eval_e(x) * xdot + self.eval_f(t, x);
        let inj = &self.inc.a_m * i_m;
        let mut top = r.rows_mut(0, self.inc.node_count());
        top += inj;
        r
    }

    /// Newton matrix of [`Self::implicit_euler_residual`] with respect to `x`.
    pub fn implicit_euler_jacobian(
        &self,
        t: f64,
        x: &DVector<f64>,
        x_prev: &DVector<f64>,
        dt: f64,
        mode: JacobianMode,
        e_lin: ELinearization,
    ) -> DMatrix<f64> {
        let mut j = self.eval_e(x) / dt + self.jacobian_f(t, x, mode);
        let full = match e_lin {
            ELinearization::Auto => self.has_constant_storage(),
            ELinearization::Full => true,
            ELinearization::Simplified => false,
        };
        if full && !self.has_constant_storage() {
            let w = (x - x_prev) / dt;
            j += self.jacobian_e_product(x, &w, mode);
        }
        j
    }
}

fn find(names: &[String], name: &str, kind: &'static str) -> Result<usize, MnaError> {
    names.iter().position(|n| n == name).ok_or_else(|| MnaError::UnknownElement { kind, name: name.into() })
}

fn check_positive(name: &str, law: &ParameterLaw) -> Result<(), MnaError> {
    match law_samples().find(|&u| !(law.value(u) > 0.0)) {
        Some(u) => Err(MnaError::NotPassive {
            name: name.into(),
            reason: format!("value at {u} is {} (must be positive)", law.value(u)),
        }),
        None => Ok(()),
    }
}

/// Central differences with step `1e-6 · (1 + |x_i|)`.
pub fn central_difference(x: &DVector<f64>, mut f: impl FnMut(&DVector<f64>) -> DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let rows = f(x).len();
    let mut j = DMatrix::zeros(rows, n);
    let mut y = x.clone();
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        j.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    j
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

    fn circuit_a() -> MnaSystem {
        MnaSystem::from_netlist(&parse_netlist(CIRCUIT_A).unwrap())
    }

    #[test]
    fn e_matrix_of_benchmark() {
        let sys = circuit_a();
        let x = DVector::zeros(sys.dim());
        let e = sys.eval_e(&x);
        // rows: n3, n4, n2 | i_L | i_V
        let (n3, n2) = (0, 2);
        assert_eq!(e[(n3, n3)], 1.0);
        assert_eq!(e[(n2, n2)], 1.0);
        assert_eq!(e[(n3, n2)], -1.0);
        assert_eq!(e[(n2, n3)], -1.0);
        assert_eq!(e[(1, 1)], 0.0);
        assert_eq!(e[(3, 3)], -5.0);
        assert_eq!(e[(4, 4)], 0.0);
    }

    #[test]
    fn e_is_zero_without_storage() {
        let sys = MnaSystem::from_netlist(&parse_netlist("R1 1 0 1\nR2 1 2 1").unwrap());
        assert_eq!(sys.eval_e(&DVector::zeros(2)), DMatrix::zeros(2, 2));
    }

    #[test]
    fn nonlinear_capacitance_at_zero_matches_constant() {
        let mut sys = circuit_a();
        let x = DVector::zeros(sys.dim());
        let before = sys.eval_e(&x);
        sys.set_capacitance_law("C1", ParameterLaw::Polynomial(vec![1.0, 0.0, 0.1])).unwrap();
        assert_eq!(sys.eval_e(&x), before);
        assert!(!sys.is_linear());
    }

    #[test]
    fn f_of_benchmark() {
        let sys = circuit_a();
        let x = DVector::zeros(sys.dim());
        assert_eq!(sys.eval_f(0.0, &x), DVector::zeros(5));
        let t = std::f64::consts::FRAC_PI_4;
        let f = sys.eval_f(t, &x);
        let is = (2.0 * t).sin() + 5.0 * (20.0 * t).sin();
        let vs = t.sin() + (20.0 * t).sin();
        assert!((is - 1.0).abs() < 1e-13);
        // I1 runs n3 -> n4
        assert!((f[0] - is).abs() < 1e-15);
        assert!((f[1] + is).abs() < 1e-15);
        assert_eq!(f[2], 0.0);
        assert_eq!(f[3], 0.0);
        assert!((f[4] + vs).abs() < 1e-15);
    }

    #[test]
    fn single_resistor_f() {
        let sys = MnaSystem::from_netlist(&parse_netlist("R1 1 0 1").unwrap());
        assert_eq!(sys.eval_f(0.0, &DVector::from_vec(vec![2.0])), DVector::from_vec(vec![2.0]));
    }

    #[test]
    fn linear_jacobian_is_conductance_block() {
        let sys = circuit_a();
        let x = DVector::zeros(sys.dim());
        let j = sys.jacobian_f(0.0, &x, JacobianMode::Auto);
        let gr = &sys.incidence().a_r * sys.incidence().a_r.transpose();
        assert_eq!(j.view((0, 0), (3, 3)), gr.view((0, 0), (3, 3)));
        let x2 = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5, 7.0]);
        assert_eq!(sys.jacobian_f(0.3, &x2, JacobianMode::Auto), j);
    }

    #[test]
    fn fd_jacobian_of_cubic_conductance() {
        let mut sys = MnaSystem::from_netlist(&parse_netlist("R1 1 0 1").unwrap());
        sys.set_conductance_law("R1", CurrentLaw::Polynomial(vec![0.0, 1.0, 0.0, 1.0])).unwrap();
        let x = DVector::from_vec(vec![0.5]);
        let fd = sys.jacobian_f(0.0, &x, JacobianMode::Auto);
        assert!((fd[(0, 0)] - (3.0 * 0.25 + 1.0)).abs() < 1e-6);
        let an = sys.jacobian_f(0.0, &x, JacobianMode::Analytic);
        assert!((an[(0, 0)] - 1.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_monotone_laws() {
        let mut sys = MnaSystem::from_netlist(&parse_netlist("R1 1 0 1\nC1 1 0 1").unwrap());
        assert!(sys.set_conductance_law("R1", CurrentLaw::Polynomial(vec![0.0, -1.0])).is_err());
        assert!(sys.set_capacitance_law("C1", ParameterLaw::Polynomial(vec![1.0, 1.0])).is_err());
        assert!(matches!(
            sys.set_capacitance_law("C9", ParameterLaw::Constant(1.0)),
            Err(MnaError::UnknownElement { .. })
        ));
    }

    #[test]
    fn e_product_jacobian_matches_fd() {
        let mut sys = circuit_a();
        sys.set_capacitance_law("C1", ParameterLaw::Polynomial(vec![1.0, 0.0, 0.1])).unwrap();
        sys.set_inductance_law("L1", ParameterLaw::Polynomial(vec![5.0, 0.0, 0.5])).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2, 0.7, 1.1, 0.4]);
        let w = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5, 3.0]);
        let an = sys.jacobian_e_product(&x, &w, JacobianMode::Analytic);
        let fd = sys.jacobian_e_product(&x, &w, JacobianMode::FiniteDifference);
        assert!((an - fd).abs().max() < 1e-7);
    }

    #[test]
    fn port_rows() {
        let sys = circuit_a();
        let p = sys.port_matrix();
        assert_eq!(p.shape(), (5, 1));
        assert_eq!(p[(2, 0)], -1.0);
        let x = DVector::from_vec(vec![0.0, 0.0, 3.0, 0.0, 0.0]);
        assert_eq!(sys.port_voltage(&x)[0], -3.0);
    }
}
