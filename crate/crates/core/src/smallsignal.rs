//! Macro expansion into primitive linear elements.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::netlist::{Circuit, ElementKind, GROUND};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrimitiveKind {
    Resistor {
        a: String,
        b: String,
        ohms: f64,
    },
    VSource {
        pos: String,
        neg: String,
        volts: f64,
    },
    ISource {
        pos: String,
        neg: String,
        amps: f64,
    },
    Vcvs {
        pos: String,
        neg: String,
        ctrl_pos: String,
        ctrl_neg: String,
        gain: f64,
    },
    Vccs {
        pos: String,
        neg: String,
        ctrl_pos: String,
        ctrl_neg: String,
        gm: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Primitive {
    pub name: String,
    #[serde(flatten)]
    pub kind: PrimitiveKind,
}

impl Primitive {
    pub fn new(name: impl Into<String>, kind: PrimitiveKind) -> Self {
        Primitive {
            name: name.into(),
            kind,
        }
    }

    pub fn resistor(name: &str, a: &str, b: &str, ohms: f64) -> Self {
        Primitive::new(
            name,
            PrimitiveKind::Resistor {
                a: a.into(),
                b: b.into(),
                ohms,
            },
        )
    }

    pub fn vsource(name: &str, pos: &str, neg: &str, volts: f64) -> Self {
        Primitive::new(
            name,
            PrimitiveKind::VSource {
                pos: pos.into(),
                neg: neg.into(),
                volts,
            },
        )
    }

    pub fn isource(name: &str, pos: &str, neg: &str, amps: f64) -> Self {
        Primitive::new(
            name,
            PrimitiveKind::ISource {
                pos: pos.into(),
                neg: neg.into(),
                amps,
            },
        )
    }

    pub fn vcvs(name: &str, pos: &str, neg: &str, cp: &str, cn: &str, gain: f64) -> Self {
        Primitive::new(
            name,
            PrimitiveKind::Vcvs {
                pos: pos.into(),
                neg: neg.into(),
                ctrl_pos: cp.into(),
                ctrl_neg: cn.into(),
                gain,
            },
        )
    }

    pub fn vccs(name: &str, pos: &str, neg: &str, cp: &str, cn: &str, gm: f64) -> Self {
        Primitive::new(
            name,
            PrimitiveKind::Vccs {
                pos: pos.into(),
                neg: neg.into(),
                ctrl_pos: cp.into(),
                ctrl_neg: cn.into(),
                gm,
            },
        )
    }

    pub fn terminals(&self) -> Vec<&str> {
        match &self.kind {
            PrimitiveKind::Resistor { a, b, .. } => vec![a, b],
            PrimitiveKind::VSource { pos, neg, .. } | PrimitiveKind::ISource { pos, neg, .. } => {
                vec![pos, neg]
            }
            PrimitiveKind::Vcvs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                ..
            }
            | PrimitiveKind::Vccs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                ..
            } => vec![pos, neg, ctrl_pos, ctrl_neg],
        }
    }

    pub fn is_independent_source(&self) -> bool {
        matches!(
            self.kind,
            PrimitiveKind::VSource { .. } | PrimitiveKind::ISource { .. }
        )
    }
}

/// A circuit made of primitives only.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LinearCircuit {
    pub nodes: BTreeSet<String>,
    pub elements: Vec<Primitive>,
    /// Primitive name -> name of the macro it was expanded from.
    pub provenance: BTreeMap<String, String>,
}

impl LinearCircuit {
    pub fn new() -> Self {
        LinearCircuit::default()
    }

    pub fn push(&mut self, p: Primitive) -> &mut Self {
        for t in p.terminals() {
            self.nodes.insert(t.to_string());
        }
        self.elements.push(p);
        self
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.push(p);
        self
    }

    pub fn element(&self, name: &str) -> Option<&Primitive> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Sub-circuit holding only the named elements; nodes are re-derived.
    pub fn restricted_to<'a, I>(&self, names: I) -> LinearCircuit
    where
        I: IntoIterator<Item = &'a str>,
    {
        let keep: BTreeSet<&str> = names.into_iter().collect();
        let mut out = LinearCircuit::new();
        for e in self.elements.iter().filter(|e| {
            keep.contains(e.name.as_str())
                || self
                    .provenance
                    .get(&e.name)
                    .is_some_and(|m| keep.contains(m.as_str()))
        }) {
            out.push(e.clone());
            if let Some(m) = self.provenance.get(&e.name) {
                out.provenance.insert(e.name.clone(), m.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinearizeError {
    #[error("invalid parameters for macro '{0}'")]
    InvalidMacroParams(String),
}

/// Name of the internal node synthesized for op-amp `name`.
pub fn thevenin_node(name: &str) -> String {
    format!("{name}__thev")
}

fn positive(v: f64) -> bool {
    v > 0.0 && !v.is_nan()
}

/// Expands every macro into primitives.
///
/// A hybrid-pi transistor becomes `rpi` from base to emitter, a VCCS
/// `gm * v(b, e)` from collector to emitter, and `ro` from collector to
/// emitter (omitted when infinite). An op-amp becomes a VCVS of gain `K`
/// driven by `v(plus, minus)` at the node `<name>__thev`, `rout` from that
/// node to the output, and `rin` across the inputs when given.
pub fn linearize(c: &Circuit) -> Result<LinearCircuit, LinearizeError> {
    let mut lc = LinearCircuit::new();
    for n in &c.nodes {
        lc.nodes.insert(n.clone());
    }
    for e in &c.elements {
        let name = e.name.as_str();
        match &e.kind {
            ElementKind::Resistor { a, b, ohms } => {
                lc.push(Primitive::resistor(name, a, b, *ohms));
            }
            ElementKind::VSource { pos, neg, volts } => {
                lc.push(Primitive::vsource(name, pos, neg, *volts));
            }
            ElementKind::ISource { pos, neg, amps } => {
                lc.push(Primitive::isource(name, pos, neg, *amps));
            }
            ElementKind::Vcvs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                gain,
            } => {
                lc.push(Primitive::vcvs(name, pos, neg, ctrl_pos, ctrl_neg, *gain));
            }
            ElementKind::Vccs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                gm,
            } => {
                lc.push(Primitive::vccs(name, pos, neg, ctrl_pos, ctrl_neg, *gm));
            }
            ElementKind::BjtPi {
                collector,
                base,
                emitter,
                gm,
                rpi,
                ro,
            } => {
                let ok = positive(*gm) && positive(*rpi) && gm.is_finite() && rpi.is_finite() && positive(*ro);
                if !ok {
                    return Err(LinearizeError::InvalidMacroParams(name.to_string()));
                }
                let mut parts = vec![
                    Primitive::resistor(&format!("{name}.rpi"), base, emitter, *rpi),
                    Primitive::vccs(&format!("{name}.gm"), collector, emitter, base, emitter, *gm),
                ];
                if ro.is_finite() {
                    parts.push(Primitive::resistor(&format!("{name}.ro"), collector, emitter, *ro));
                }
                for p in parts {
                    lc.provenance.insert(p.name.clone(), name.to_string());
                    lc.push(p);
                }
            }
            ElementKind::OpAmp {
                plus,
                minus,
                out,
                gain,
                rout,
                rin,
            } => {
                let rin_ok = rin.is_none_or(positive);
                let ok = positive(*gain) && gain.is_finite() && positive(*rout) && rout.is_finite() && rin_ok;
                if !ok {
                    return Err(LinearizeError::InvalidMacroParams(name.to_string()));
                }
                let thev = thevenin_node(name);
                let mut parts = vec![
                    Primitive::vcvs(&format!("{name}.e"), &thev, GROUND, plus, minus, *gain),
                    Primitive::resistor(&format!("{name}.rout"), &thev, out, *rout),
                ];
                if let Some(r) = rin.filter(|r| r.is_finite()) {
                    parts.push(Primitive::resistor(&format!("{name}.rin"), plus, minus, r));
                }
                for p in parts {
                    lc.provenance.insert(p.name.clone(), name.to_string());
                    lc.push(p);
                }
            }
        }
    }
    Ok(lc)
}
