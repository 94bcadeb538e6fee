//! Modified nodal analysis.
//!
//! Unknowns are the non-ground node voltages (sorted by name) followed by
//! one branch current per voltage source and VCVS, in element order. A
//! branch current flows into the source at its `pos` terminal, so the
//! current a source delivers into the rest of the circuit at `pos` is the
//! negated branch current.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, LinalgError, Matrix};
use crate::netlist::{NodePair, GROUND};
use crate::smallsignal::{LinearCircuit, Primitive, PrimitiveKind};

/// Name given to the source injected by impedance and transfer probes.
pub const TEST_SOURCE: &str = "__test";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Unknown {
    NodeVoltage(String),
    BranchCurrent(String),
}

impl fmt::Display for Unknown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unknown::NodeVoltage(n) => write!(f, "v({n})"),
            Unknown::BranchCurrent(n) => write!(f, "i({n})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MnaSystem {
    pub dimension: usize,
    pub matrix: Matrix,
    /// The individual element contributions that sum to `matrix`.
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    pub unknowns: Vec<Unknown>,
    index: HashMap<Unknown, usize>,
}

impl MnaSystem {
    pub fn index_of(&self, u: &Unknown) -> Option<usize> {
        self.index.get(u).copied()
    }

    fn node(&self, name: &str) -> Option<usize> {
        if name == GROUND {
            None
        } else {
            self.index_of(&Unknown::NodeVoltage(name.to_string()))
        }
    }

    /// Contribution of each independent source to the right-hand side, per
    /// unit source value.
    pub fn source_vector(&self, lc: &LinearCircuit, source: &str) -> Option<Vec<f64>> {
        let p = lc.element(source)?;
        let mut b = vec![0.0; self.dimension];
        match &p.kind {
            PrimitiveKind::VSource { .. } => {
                b[self.index_of(&Unknown::BranchCurrent(source.to_string()))?] = 1.0;
            }
            PrimitiveKind::ISource { pos, neg, .. } => {
                if let Some(i) = self.node(pos) {
                    b[i] -= 1.0;
                }
                if let Some(i) = self.node(neg) {
                    b[i] += 1.0;
                }
            }
            _ => return None,
        }
        Some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solution {
    pub node_voltages: BTreeMap<String, f64>,
    pub branch_currents: BTreeMap<String, f64>,
}

impl Solution {
    pub fn voltage(&self, node: &str) -> f64 {
        if node == GROUND {
            0.0
        } else {
            self.node_voltages.get(node).copied().unwrap_or(0.0)
        }
    }

    pub fn across(&self, pair: &NodePair) -> f64 {
        self.voltage(&pair.pos) - self.voltage(&pair.neg)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MnaError {
    #[error("singular MNA matrix: floating subcircuit or contradictory sources")]
    SingularMatrix,
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("'{0}' is not an independent source")]
    UnknownSource(String),
    #[error("port {0} has identical terminals")]
    DegeneratePort(NodePair),
}

impl From<LinalgError> for MnaError {
    fn from(_: LinalgError) -> Self {
        MnaError::SingularMatrix
    }
}

/// A driving-point impedance; an open port is reported as `Infinite`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "ohms", rename_all = "snake_case")]
pub enum Impedance {
    Finite(f64),
    Infinite,
}

impl Impedance {
    pub fn ohms(self) -> f64 {
        match self {
            Impedance::Finite(v) => v,
            Impedance::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Impedance::Infinite)
    }
}

impl fmt::Display for Impedance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", crate::units::format_ohms(self.ohms()))
    }
}

// Below this test current (for a 1 V probe) the port is treated as open.
const OPEN_CURRENT: f64 = 1e-15;

fn stamp(m: &mut Vec<(usize, usize, f64)>, r: Option<usize>, c: Option<usize>, v: f64) {
    if let (Some(r), Some(c)) = (r, c) {
        if v != 0.0 {
            m.push((r, c, v));
        }
    }
}

fn add(b: &mut [f64], r: Option<usize>, v: f64) {
    if let Some(r) = r {
        b[r] += v;
    }
}

/// Builds the MNA matrix and right-hand side.
pub fn assemble(lc: &LinearCircuit) -> MnaSystem {
    let mut unknowns: Vec<Unknown> = lc
        .nodes
        .iter()
        .filter(|n| n.as_str() != GROUND)
        .map(|n| Unknown::NodeVoltage(n.clone()))
        .collect();
    for p in &lc.elements {
        if matches!(p.kind, PrimitiveKind::VSource { .. } | PrimitiveKind::Vcvs { .. }) {
            unknowns.push(Unknown::BranchCurrent(p.name.clone()));
        }
    }
    let index: HashMap<Unknown, usize> = unknowns
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, u)| (u, i))
        .collect();
    let n = unknowns.len();
    let mut entries = Vec::new();
    let mut rhs = vec![0.0; n];
    let node = |s: &str| {
        if s == GROUND {
            None
        } else {
            index.get(&Unknown::NodeVoltage(s.to_string())).copied()
        }
    };
    let branch = |name: &str| index[&Unknown::BranchCurrent(name.to_string())];
    for p in &lc.elements {
        match &p.kind {
            PrimitiveKind::Resistor { a, b, ohms } => {
                let g = 1.0 / ohms;
                let (a, b) = (node(a), node(b));
                stamp(&mut entries, a, a, g);
                stamp(&mut entries, b, b, g);
                stamp(&mut entries, a, b, -g);
                stamp(&mut entries, b, a, -g);
            }
            PrimitiveKind::ISource { pos, neg, amps } => {
                let (pp, nn) = (node(pos), node(neg));
                add(&mut rhs, pp, -amps);
                add(&mut rhs, nn, *amps);
            }
            PrimitiveKind::Vccs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                gm,
            } => {
                let (pp, nn, cp, cn) = (node(pos), node(neg), node(ctrl_pos), node(ctrl_neg));
                stamp(&mut entries, pp, cp, *gm);
                stamp(&mut entries, pp, cn, -gm);
                stamp(&mut entries, nn, cp, -gm);
                stamp(&mut entries, nn, cn, *gm);
            }
            PrimitiveKind::VSource { pos, neg, volts } => {
                let k = branch(&p.name);
                let (pp, nn) = (node(pos), node(neg));
                stamp(&mut entries, pp, Some(k), 1.0);
                stamp(&mut entries, nn, Some(k), -1.0);
                stamp(&mut entries, Some(k), pp, 1.0);
                stamp(&mut entries, Some(k), nn, -1.0);
                rhs[k] += volts;
            }
            PrimitiveKind::Vcvs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                gain,
            } => {
                let k = branch(&p.name);
                let (pp, nn, cp, cn) = (node(pos), node(neg), node(ctrl_pos), node(ctrl_neg));
                stamp(&mut entries, pp, Some(k), 1.0);
                stamp(&mut entries, nn, Some(k), -1.0);
                stamp(&mut entries, Some(k), pp, 1.0);
                stamp(&mut entries, Some(k), nn, -1.0);
                stamp(&mut entries, Some(k), cp, -gain);
                stamp(&mut entries, Some(k), cn, *gain);
            }
        }
    }
    let mut matrix = Matrix::zeros(n, n);
    for &(i, j, v) in &entries {
        matrix[(i, j)] += v;
    }
    MnaSystem {
        dimension: n,
        matrix,
        entries,
        rhs,
        unknowns,
        index,
    }
}

pub fn solve(sys: &MnaSystem) -> Result<Solution, MnaError> {
    let x = linalg::solve_entries(sys.dimension, &sys.entries, &sys.rhs)?;
    let mut sol = Solution {
        node_voltages: BTreeMap::new(),
        branch_currents: BTreeMap::new(),
    };
    for (u, v) in sys.unknowns.iter().zip(x) {
        match u {
            Unknown::NodeVoltage(n) => sol.node_voltages.insert(n.clone(), v),
            Unknown::BranchCurrent(n) => sol.branch_currents.insert(n.clone(), v),
        };
    }
    Ok(sol)
}

/// Net current leaving each non-ground node through the circuit elements,
/// voltage-source branches included. Zero (to rounding) for a true solution.
pub fn kcl_residuals(lc: &LinearCircuit, sol: &Solution) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = lc
        .nodes
        .iter()
        .filter(|n| n.as_str() != GROUND)
        .map(|n| (n.clone(), 0.0))
        .collect();
    let mut leave = |node: &str, i: f64| {
        if let Some(v) = out.get_mut(node) {
            *v += i;
        }
    };
    for p in &lc.elements {
        match &p.kind {
            PrimitiveKind::Resistor { a, b, ohms } => {
                let i = (sol.voltage(a) - sol.voltage(b)) / ohms;
                leave(a, i);
                leave(b, -i);
            }
            PrimitiveKind::ISource { pos, neg, amps } => {
                leave(pos, *amps);
                leave(neg, -amps);
            }
            PrimitiveKind::Vccs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                gm,
            } => {
                let i = gm * (sol.voltage(ctrl_pos) - sol.voltage(ctrl_neg));
                leave(pos, i);
                leave(neg, -i);
            }
            PrimitiveKind::VSource { pos, neg, .. } | PrimitiveKind::Vcvs { pos, neg, .. } => {
                let i = sol.branch_currents[&p.name];
                leave(pos, i);
                leave(neg, -i);
            }
        }
    }
    out
}

/// Shorts every voltage source and opens every current source.
pub fn zero_independent_sources(lc: &LinearCircuit) -> LinearCircuit {
    let mut out = LinearCircuit {
        nodes: lc.nodes.clone(),
        elements: Vec::with_capacity(lc.elements.len()),
        provenance: lc.provenance.clone(),
    };
    for p in &lc.elements {
        match &p.kind {
            PrimitiveKind::VSource { pos, neg, .. } => {
                out.elements.push(Primitive::vsource(&p.name, pos, neg, 0.0));
            }
            PrimitiveKind::ISource { .. } => {}
            _ => out.elements.push(p.clone()),
        }
    }
    out
}

fn check_port(lc: &LinearCircuit, port: &NodePair) -> Result<(), MnaError> {
    for n in [&port.pos, &port.neg] {
        if n != GROUND && !lc.nodes.contains(n) {
            return Err(MnaError::UnknownNode(n.clone()));
        }
    }
    if port.pos == port.neg {
        return Err(MnaError::DegeneratePort(port.clone()));
    }
    Ok(())
}

/// How a port is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Excitation {
    /// Unit voltage source `v(pos) - v(neg) = 1`; the response is the
    /// current delivered into the circuit at `pos`.
    Voltage,
    /// Unit current injected into `pos` and drawn from `neg`; the response
    /// is `v(pos) - v(neg)`.
    Current,
}

/// The circuit with its independent sources zeroed and a unit probe named
/// [`TEST_SOURCE`] attached across `port`.
pub fn with_test_source(
    lc: &LinearCircuit,
    port: &NodePair,
    excitation: Excitation,
) -> Result<LinearCircuit, MnaError> {
    check_port(lc, port)?;
    let mut probed = zero_independent_sources(lc);
    probed.push(match excitation {
        Excitation::Voltage => Primitive::vsource(TEST_SOURCE, &port.pos, &port.neg, 1.0),
        // SPICE convention: current flows neg -> pos through the circuit
        Excitation::Current => Primitive::isource(TEST_SOURCE, &port.neg, &port.pos, 1.0),
    });
    Ok(probed)
}

/// `v_X / i_X` at `port` with all independent sources zeroed.
pub fn driving_point_impedance(lc: &LinearCircuit, port: &NodePair) -> Result<Impedance, MnaError> {
    let probed = with_test_source(lc, port, Excitation::Voltage)?;
    let sol = solve(&assemble(&probed))?;
    let i_x = -sol.branch_currents[TEST_SOURCE];
    if i_x.abs() < OPEN_CURRENT {
        Ok(Impedance::Infinite)
    } else {
        Ok(Impedance::Finite(1.0 / i_x))
    }
}

/// Voltage across `observe` per unit value of `source`, all other
/// independent sources zeroed.
pub fn transfer(lc: &LinearCircuit, source: &str, observe: &NodePair) -> Result<f64, MnaError> {
    let src = lc
        .element(source)
        .filter(|p| p.is_independent_source())
        .ok_or_else(|| MnaError::UnknownSource(source.to_string()))?;
    for n in [&observe.pos, &observe.neg] {
        if n != GROUND && !lc.nodes.contains(n) {
            return Err(MnaError::UnknownNode(n.clone()));
        }
    }
    let mut single = zero_independent_sources(lc);
    let unit = match &src.kind {
        PrimitiveKind::VSource { pos, neg, .. } => Primitive::vsource(source, pos, neg, 1.0),
        PrimitiveKind::ISource { pos, neg, .. } => Primitive::isource(source, pos, neg, 1.0),
        _ => unreachable!("filtered to independent sources"),
    };
    match single.elements.iter_mut().find(|p| p.name == source) {
        Some(slot) => *slot = unit,
        None => single.elements.push(unit),
    }
    let sol = solve(&assemble(&single))?;
    Ok(sol.across(observe))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn divider() -> LinearCircuit {
        LinearCircuit::new()
            .with(Primitive::vsource("V1", "in", "0", 1.0))
            .with(Primitive::resistor("R1", "in", "mid", 1e3))
            .with(Primitive::resistor("R2", "mid", "0", 1e3))
    }

    #[test]
    fn divider_dimension_and_solution() {
        let lc = divider();
        let sys = assemble(&lc);
        assert_eq!(sys.dimension, 3);
        let sol = solve(&sys).unwrap();
        assert!((sol.voltage("mid") - 0.5).abs() < 1e-15);
        assert!((sol.branch_currents["V1"] + 0.5e-3).abs() < 1e-15);
        for r in kcl_residuals(&lc, &sol).values() {
            assert!(r.abs() < 1e-15);
        }
    }

    #[test]
    fn empty_circuit() {
        let sys = assemble(&LinearCircuit::new());
        assert_eq!(sys.dimension, 0);
        assert!(solve(&sys).unwrap().node_voltages.is_empty());
    }

    #[test]
    fn contradictory_sources_are_singular() {
        let lc = LinearCircuit::new()
            .with(Primitive::vsource("V1", "a", "0", 1.0))
            .with(Primitive::vsource("V2", "a", "0", 2.0))
            .with(Primitive::resistor("R1", "a", "0", 1e3));
        assert_eq!(solve(&assemble(&lc)).unwrap_err(), MnaError::SingularMatrix);
    }

    #[test]
    fn floating_node_is_singular() {
        let lc = LinearCircuit::new()
            .with(Primitive::isource("I1", "0", "a", 1.0))
            .with(Primitive::resistor("R1", "a", "0", 1e3))
            .with(Primitive::resistor("R2", "x", "y", 1e3));
        assert_eq!(solve(&assemble(&lc)).unwrap_err(), MnaError::SingularMatrix);
    }

    #[test]
    fn series_impedance() {
        let lc = LinearCircuit::new()
            .with(Primitive::resistor("R1", "p", "m", 1e3))
            .with(Primitive::resistor("R2", "m", "0", 2e3));
        let z = driving_point_impedance(&lc, &NodePair::to_ground("p")).unwrap();
        assert!((z.ohms() - 3e3).abs() < 1e-9);
    }

    #[test]
    fn open_port_is_infinite() {
        // p only drives a controlled source, so no current flows into it
        let lc = LinearCircuit::new()
            .with(Primitive::resistor("R1", "a", "0", 1e3))
            .with(Primitive::vccs("G1", "0", "a", "p", "0", 1e-3));
        let z = driving_point_impedance(&lc, &NodePair::to_ground("p")).unwrap();
        assert!(z.is_infinite());
        assert_eq!(z.ohms(), f64::INFINITY);
    }

    #[test]
    fn sources_zeroed_for_impedance() {
        let mut lc = divider();
        lc.push(Primitive::isource("I1", "0", "mid", 5.0));
        let z = driving_point_impedance(&lc, &NodePair::to_ground("mid")).unwrap();
        assert!((z.ohms() - 500.0).abs() < 1e-9);
    }

    #[test]
    fn transfers() {
        let lc = divider();
        assert!((transfer(&lc, "V1", &NodePair::to_ground("mid")).unwrap() - 0.5).abs() < 1e-15);
        let buf = LinearCircuit::new()
            .with(Primitive::vsource("Vin", "in", "0", 3.0))
            .with(Primitive::resistor("Rin", "in", "0", 1e3))
            .with(Primitive::vcvs("E1", "out", "0", "in", "0", 1.0))
            .with(Primitive::resistor("RL", "out", "0", 1e3));
        assert!((transfer(&buf, "Vin", &NodePair::to_ground("out")).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            transfer(&buf, "RL", &NodePair::to_ground("out")).unwrap_err(),
            MnaError::UnknownSource("RL".into())
        );
        assert_eq!(
            transfer(&buf, "Vx", &NodePair::to_ground("out")).unwrap_err(),
            MnaError::UnknownSource("Vx".into())
        );
    }

    #[test]
    fn unknown_port_node() {
        assert_eq!(
            driving_point_impedance(&divider(), &NodePair::to_ground("nope")).unwrap_err(),
            MnaError::UnknownNode("nope".into())
        );
    }
}
