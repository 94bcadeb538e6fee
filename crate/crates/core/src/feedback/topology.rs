//! Feedback topology recognition from port annotations.
//!
//! The feedback network meets the forward amplifier at its attachment
//! nodes. At the input, attaching to the input node itself sums currents
//! (shunt); attaching to the loop partner of the input device (the emitter
//! of a base-driven transistor, the other input of an op-amp) compares
//! voltages (series). At the output, attaching to the output node senses
//! voltage (shunt); attaching to the other current terminal of the output
//! transistor senses its current (series).

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::formulas::OutputCase;
use crate::netlist::{Circuit, ElementKind, NodePair, GROUND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Connection {
    Series,
    Shunt,
}

impl fmt::Display for Connection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connection::Series => "series",
            Connection::Shunt => "shunt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    Irrelevant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeedbackTopology {
    pub input_mix: Connection,
    pub output_sense: Connection,
    pub validity: Validity,
}

impl fmt::Display for FeedbackTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = match self.validity {
            Validity::Valid => "valid",
            Validity::Irrelevant => "irrelevant",
        };
        write!(f, "{}-{} ({v})", self.input_mix, self.output_sense)
    }
}

/// Where the feedback network's two ports sit in the circuit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeedbackPorts {
    pub input: NodePair,
    pub output: NodePair,
}

impl FeedbackPorts {
    pub fn coincide(&self) -> bool {
        self.input == self.output
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub topology: FeedbackTopology,
    /// `None` for an irrelevant topology.
    pub ports: Option<FeedbackPorts>,
    /// Output transistor terminal, when the output is series-sensed.
    pub output_case: Option<OutputCase>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("missing .{0} directive")]
    MissingPort(&'static str),
    #[error("no feedback elements declared (.feedback)")]
    NoFeedback,
    #[error("unclassifiable topology: {0}")]
    Unclassifiable(String),
}

#[derive(Default)]
struct Side {
    shunt: Option<String>,
    series: Option<String>,
}

impl Side {
    fn pick(self, what: &str) -> Result<Option<(Connection, String)>, ClassifyError> {
        match (self.shunt, self.series) {
            (Some(a), Some(b)) => Err(ClassifyError::Unclassifiable(format!(
                "feedback attaches to both {a} and {b} on the {what} side"
            ))),
            (Some(a), None) => Ok(Some((Connection::Shunt, a))),
            (None, Some(b)) => Ok(Some((Connection::Series, b))),
            (None, None) => Ok(None),
        }
    }
}

pub fn classify_topology(c: &Circuit) -> Result<FeedbackTopology, ClassifyError> {
    classify(c).map(|r| r.topology)
}

pub fn classify(c: &Circuit) -> Result<Classification, ClassifyError> {
    let ann = &c.annotations;
    let input = ann.input_port.as_ref().ok_or(ClassifyError::MissingPort("input"))?;
    let output = ann.output_port.as_ref().ok_or(ClassifyError::MissingPort("output"))?;
    if ann.feedback_elements.is_empty() {
        return Err(ClassifyError::NoFeedback);
    }

    let fb_nodes: BTreeSet<&str> = c
        .elements
        .iter()
        .filter(|e| ann.feedback_elements.contains(&e.name))
        .flat_map(|e| e.terminals())
        .collect();
    let fwd_nodes: BTreeSet<&str> = c.forward_elements().flat_map(|e| e.terminals()).collect();
    let attach: BTreeSet<&str> = fb_nodes
        .intersection(&fwd_nodes)
        .copied()
        .filter(|n| *n != GROUND)
        .collect();

    let mut in_side = Side::default();
    let mut out_side = Side::default();
    let mut out_case = None;
    let mut collectors = BTreeSet::new();
    let (inp, outp) = (input.pos.as_str(), output.pos.as_str());
    if attach.contains(inp) {
        in_side.shunt = Some(inp.to_string());
    }
    if attach.contains(outp) {
        out_side.shunt = Some(outp.to_string());
    }
    for e in c.forward_elements() {
        match &e.kind {
            ElementKind::BjtPi {
                collector,
                base,
                emitter,
                ..
            } => {
                collectors.insert(collector.as_str());
                if base == inp && attach.contains(emitter.as_str()) {
                    in_side.series.get_or_insert(emitter.clone());
                }
                let partner = if collector == outp {
                    Some((emitter, OutputCase::Collector))
                } else if emitter == outp {
                    Some((collector, OutputCase::Emitter))
                } else {
                    None
                };
                if let Some((node, case)) = partner {
                    if attach.contains(node.as_str()) && out_side.series.is_none() {
                        out_side.series = Some(node.clone());
                        out_case = Some(case);
                    }
                }
            }
            ElementKind::OpAmp { plus, minus, .. } => {
                for (a, b) in [(plus, minus), (minus, plus)] {
                    if a == inp && attach.contains(b.as_str()) {
                        in_side.series.get_or_insert(b.clone());
                    }
                }
            }
            _ => {}
        }
    }

    let input_pick = in_side.pick("input")?;
    let output_pick = out_side.pick("output")?;
    if input_pick.is_none() && attach.iter().any(|n| collectors.contains(n)) {
        return Ok(Classification {
            topology: FeedbackTopology {
                input_mix: Connection::Shunt,
                output_sense: output_pick.map_or(Connection::Shunt, |(k, _)| k),
                validity: Validity::Irrelevant,
            },
            ports: None,
            output_case: None,
        });
    }
    let (input_mix, in_node) = input_pick.ok_or_else(|| {
        ClassifyError::Unclassifiable(format!(
            "feedback network does not reach input node {inp} or its loop partner"
        ))
    })?;
    let (output_sense, out_node) = output_pick.ok_or_else(|| {
        ClassifyError::Unclassifiable(format!(
            "feedback network does not reach output node {outp} or the output transistor"
        ))
    })?;
    Ok(Classification {
        topology: FeedbackTopology {
            input_mix,
            output_sense,
            validity: Validity::Valid,
        },
        ports: Some(FeedbackPorts {
            input: NodePair::new(in_node, input.neg.clone()),
            output: NodePair::new(out_node, output.neg.clone()),
        }),
        output_case: match output_sense {
            Connection::Series => out_case,
            Connection::Shunt => None,
        },
    })
}
