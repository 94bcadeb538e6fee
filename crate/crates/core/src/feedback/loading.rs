//! Loading of the feedback network on the forward amplifier.
//!
//! The opposite port is shorted when it is a shunt connection and left
//! open when it is a series one. Port currents are counted as entering the
//! network at the positive terminal.

use serde::Serialize;

use super::topology::{Connection, FeedbackPorts, FeedbackTopology};
use crate::mna::{self, Excitation, Impedance, MnaError, TEST_SOURCE};
use crate::netlist::NodePair;
use crate::smallsignal::{LinearCircuit, Primitive};

const SHORT: &str = "__short";

/// Units of the feedback factor, named by (mixed quantity)/(sensed quantity).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorKind {
    /// v_f / v_o
    VoltageRatio,
    /// v_f / i_o, ohms
    Transresistance,
    /// i_f / v_o, siemens
    Transconductance,
    /// i_f / i_o
    CurrentRatio,
}

impl FactorKind {
    pub fn of(t: &FeedbackTopology) -> Self {
        match (t.input_mix, t.output_sense) {
            (Connection::Series, Connection::Shunt) => FactorKind::VoltageRatio,
            (Connection::Series, Connection::Series) => FactorKind::Transresistance,
            (Connection::Shunt, Connection::Shunt) => FactorKind::Transconductance,
            (Connection::Shunt, Connection::Series) => FactorKind::CurrentRatio,
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            FactorKind::VoltageRatio | FactorKind::CurrentRatio => "",
            FactorKind::Transresistance => "Ω",
            FactorKind::Transconductance => "S",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadingModel {
    pub r_if: Impedance,
    pub r_of: Impedance,
    pub f: f64,
    pub f_kind: FactorKind,
}

fn terminate(fb: &LinearCircuit, port: &NodePair, how: Connection) -> LinearCircuit {
    let mut net = fb.clone();
    if how == Connection::Shunt {
        net.push(Primitive::vsource(SHORT, &port.pos, &port.neg, 0.0));
    }
    net
}

fn port_impedance(
    fb: &LinearCircuit,
    ports: &FeedbackPorts,
    measured: &NodePair,
    other: &NodePair,
    other_conn: Connection,
) -> Result<Impedance, MnaError> {
    if ports.coincide() {
        return mna::driving_point_impedance(fb, measured);
    }
    mna::driving_point_impedance(&terminate(fb, other, other_conn), measured)
}

/// Input and output loading plus the feedback factor of a passive
/// feedback network.
pub fn loading_effect(
    fb: &LinearCircuit,
    topo: &FeedbackTopology,
    ports: &FeedbackPorts,
) -> Result<LoadingModel, MnaError> {
    let r_if = port_impedance(fb, ports, &ports.input, &ports.output, topo.output_sense)?;
    let r_of = port_impedance(fb, ports, &ports.output, &ports.input, topo.input_mix)?;

    let excitation = match topo.output_sense {
        Connection::Shunt => Excitation::Voltage,
        Connection::Series => Excitation::Current,
    };
    let mut net = mna::with_test_source(fb, &ports.output, excitation)?;
    let short_input = topo.input_mix == Connection::Shunt && !ports.coincide();
    if short_input {
        net.push(Primitive::vsource(SHORT, &ports.input.pos, &ports.input.neg, 0.0));
    }
    let sol = mna::solve(&mna::assemble(&net))?;
    let f = match topo.input_mix {
        Connection::Series => sol.across(&ports.input),
        Connection::Shunt if short_input => -sol.branch_currents[SHORT],
        // Same port: the mixed current is the probe's own current.
        Connection::Shunt => match excitation {
            Excitation::Voltage => -sol.branch_currents[TEST_SOURCE],
            Excitation::Current => 1.0,
        },
    };
    Ok(LoadingModel {
        r_if,
        r_of,
        f,
        f_kind: FactorKind::of(topo),
    })
}
