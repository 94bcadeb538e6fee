//! Netlist front end.
//!
//! # Grammar
//!
//! One statement per line. Blank lines are ignored, lines whose first
//! non-blank character is `*` are comments, and everything after `.end` is
//! ignored. Tokens are separated by whitespace. Node names are made of ASCII
//! letters, digits, `_` and `.`; node `0` is ground. Values take the
//! engineering suffixes described in [`crate::units`].
//!
//! ```text
//! Rname  a b  ohms                        resistor
//! Vname  p n  volts                       independent voltage source, v(p) - v(n) = volts
//! Iname  p n  amps                        independent current source, flows p -> n through the source
//! Ename  p n  cp cn gain                  VCVS, v(p) - v(n) = gain * (v(cp) - v(cn))
//! Gname  p n  cp cn siemens               VCCS, gm * (v(cp) - v(cn)) flows p -> n through the source
//! Qname  c b e  gm=<S> rpi=<ohm> ro=<ohm>           hybrid-pi BJT (ro may be inf)
//! Uname  plus minus out  K=<gain> rout=<ohm> [rin=<ohm>]   op-amp Thevenin model
//! .title text...
//! .input  n+ n-
//! .output n+ n-
//! .feedback name...
//! .end
//! ```
//!
//! Element kinds are selected by the first letter of the name
//! (case-insensitive). Macro parameter keys are case-insensitive.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{format_value, parse_value};

/// Name of the reference node.
pub const GROUND: &str = "0";

/// An ordered pair of nodes, positive first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodePair {
    pub pos: String,
    pub neg: String,
}

impl NodePair {
    pub fn new(pos: impl Into<String>, neg: impl Into<String>) -> Self {
        NodePair {
            pos: pos.into(),
            neg: neg.into(),
        }
    }

    /// Port between `node` and ground.
    pub fn to_ground(node: impl Into<String>) -> Self {
        NodePair::new(node, GROUND)
    }
}

impl fmt::Display for NodePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.pos, self.neg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementKind {
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
    /// Hybrid-pi transistor; beta is always `gm * rpi`.
    BjtPi {
        collector: String,
        base: String,
        emitter: String,
        gm: f64,
        rpi: f64,
        ro: f64,
    },
    /// Op-amp as a VCVS of gain `gain` behind `rout`, with an optional
    /// differential input resistance.
    OpAmp {
        plus: String,
        minus: String,
        out: String,
        gain: f64,
        rout: f64,
        rin: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub name: String,
    #[serde(flatten)]
    pub kind: ElementKind,
}

impl Element {
    pub fn new(name: impl Into<String>, kind: ElementKind) -> Self {
        Element {
            name: name.into(),
            kind,
        }
    }

    pub fn resistor(name: &str, a: &str, b: &str, ohms: f64) -> Self {
        Element::new(
            name,
            ElementKind::Resistor {
                a: a.into(),
                b: b.into(),
                ohms,
            },
        )
    }

    pub fn vsource(name: &str, pos: &str, neg: &str, volts: f64) -> Self {
        Element::new(
            name,
            ElementKind::VSource {
                pos: pos.into(),
                neg: neg.into(),
                volts,
            },
        )
    }

    pub fn isource(name: &str, pos: &str, neg: &str, amps: f64) -> Self {
        Element::new(
            name,
            ElementKind::ISource {
                pos: pos.into(),
                neg: neg.into(),
                amps,
            },
        )
    }

    pub fn vcvs(name: &str, pos: &str, neg: &str, cp: &str, cn: &str, gain: f64) -> Self {
        Element::new(
            name,
            ElementKind::Vcvs {
                pos: pos.into(),
                neg: neg.into(),
                ctrl_pos: cp.into(),
                ctrl_neg: cn.into(),
                gain,
            },
        )
    }

    pub fn vccs(name: &str, pos: &str, neg: &str, cp: &str, cn: &str, gm: f64) -> Self {
        Element::new(
            name,
            ElementKind::Vccs {
                pos: pos.into(),
                neg: neg.into(),
                ctrl_pos: cp.into(),
                ctrl_neg: cn.into(),
                gm,
            },
        )
    }

    pub fn bjt(name: &str, c: &str, b: &str, e: &str, gm: f64, rpi: f64, ro: f64) -> Self {
        Element::new(
            name,
            ElementKind::BjtPi {
                collector: c.into(),
                base: b.into(),
                emitter: e.into(),
                gm,
                rpi,
                ro,
            },
        )
    }

    pub fn opamp(
        name: &str,
        plus: &str,
        minus: &str,
        out: &str,
        gain: f64,
        rout: f64,
        rin: Option<f64>,
    ) -> Self {
        Element::new(
            name,
            ElementKind::OpAmp {
                plus: plus.into(),
                minus: minus.into(),
                out: out.into(),
                gain,
                rout,
                rin,
            },
        )
    }

    /// All nodes the element touches, control terminals included.
    pub fn terminals(&self) -> Vec<&str> {
        match &self.kind {
            ElementKind::Resistor { a, b, .. } => vec![a, b],
            ElementKind::VSource { pos, neg, .. } | ElementKind::ISource { pos, neg, .. } => {
                vec![pos, neg]
            }
            ElementKind::Vcvs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                ..
            }
            | ElementKind::Vccs {
                pos,
                neg,
                ctrl_pos,
                ctrl_neg,
                ..
            } => vec![pos, neg, ctrl_pos, ctrl_neg],
            ElementKind::BjtPi {
                collector,
                base,
                emitter,
                ..
            } => vec![collector, base, emitter],
            ElementKind::OpAmp {
                plus, minus, out, ..
            } => vec![plus, minus, out],
        }
    }

    /// Name prefix letter that selects this kind in the netlist grammar.
    pub fn kind_letter(&self) -> char {
        match self.kind {
            ElementKind::Resistor { .. } => 'R',
            ElementKind::VSource { .. } => 'V',
            ElementKind::ISource { .. } => 'I',
            ElementKind::Vcvs { .. } => 'E',
            ElementKind::Vccs { .. } => 'G',
            ElementKind::BjtPi { .. } => 'Q',
            ElementKind::OpAmp { .. } => 'U',
        }
    }

    pub fn is_macro(&self) -> bool {
        matches!(
            self.kind,
            ElementKind::BjtPi { .. } | ElementKind::OpAmp { .. }
        )
    }

    /// Named numeric parameters, in grammar order.
    pub fn parameters(&self) -> Vec<(&'static str, f64)> {
        match &self.kind {
            ElementKind::Resistor { ohms, .. } => vec![("ohms", *ohms)],
            ElementKind::VSource { volts, .. } => vec![("volts", *volts)],
            ElementKind::ISource { amps, .. } => vec![("amps", *amps)],
            ElementKind::Vcvs { gain, .. } => vec![("gain", *gain)],
            ElementKind::Vccs { gm, .. } => vec![("gm", *gm)],
            ElementKind::BjtPi { gm, rpi, ro, .. } => vec![("gm", *gm), ("rpi", *rpi), ("ro", *ro)],
            ElementKind::OpAmp { gain, rout, rin, .. } => {
                let mut v = vec![("K", *gain), ("rout", *rout)];
                if let Some(r) = rin {
                    v.push(("rin", *r));
                }
                v
            }
        }
    }
}

/// Port declarations and the set of elements forming the feedback network.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PortAnnotations {
    pub input_port: Option<NodePair>,
    pub output_port: Option<NodePair>,
    pub feedback_elements: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    pub title: String,
    pub nodes: BTreeSet<String>,
    pub elements: Vec<Element>,
    pub annotations: PortAnnotations,
}

impl Circuit {
    pub fn new(title: impl Into<String>) -> Self {
        Circuit {
            title: title.into(),
            nodes: BTreeSet::new(),
            elements: Vec::new(),
            annotations: PortAnnotations::default(),
        }
    }

    /// Appends an element and declares its terminals.
    pub fn push(&mut self, element: Element) -> &mut Self {
        for t in element.terminals() {
            self.nodes.insert(t.to_string());
        }
        self.elements.push(element);
        self
    }

    pub fn with(mut self, element: Element) -> Self {
        self.push(element);
        self
    }

    pub fn element(&self, name: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.name == name)
    }

    /// Elements not in the feedback set.
    pub fn forward_elements(&self) -> impl Iterator<Item = &Element> {
        self.elements
            .iter()
            .filter(|e| !self.annotations.feedback_elements.contains(&e.name))
    }
}

impl fmt::Display for Circuit {
    /// Canonical netlist text; parsing it yields an identical circuit.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.title.is_empty() {
            writeln!(f, ".title {}", self.title)?;
        }
        for e in &self.elements {
            write!(f, "{}", e.name)?;
            for t in e.terminals() {
                write!(f, " {t}")?;
            }
            if e.is_macro() {
                for (k, v) in e.parameters() {
                    write!(f, " {k}={}", format_value(v))?;
                }
            } else {
                for (_, v) in e.parameters() {
                    write!(f, " {}", format_value(v))?;
                }
            }
            writeln!(f)?;
        }
        let a = &self.annotations;
        if let Some(p) = &a.input_port {
            writeln!(f, ".input {} {}", p.pos, p.neg)?;
        }
        if let Some(p) = &a.output_port {
            writeln!(f, ".output {} {}", p.pos, p.neg)?;
        }
        if !a.feedback_elements.is_empty() {
            write!(f, ".feedback")?;
            for n in &a.feedback_elements {
                write!(f, " {n}")?;
            }
            writeln!(f)?;
        }
        writeln!(f, ".end")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate element name '{0}'")]
    DuplicateName(String),
    #[error("unknown element kind '{0}'")]
    UnknownElementKind(String),
}

/// A parse failure with a 1-based source location.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    column: line[..s].chars().count() + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: line[..s].chars().count() + 1,
        });
    }
    out
}

struct LineCtx {
    line: usize,
    end_column: usize,
}

impl LineCtx {
    fn err(&self, column: usize, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: self.line,
            column,
            kind,
        }
    }

    fn syntax(&self, column: usize, msg: impl Into<String>) -> ParseError {
        self.err(column, ParseErrorKind::Syntax(msg.into()))
    }

    fn node(&self, tok: &Token<'_>) -> Result<String, ParseError> {
        let ok = tok
            .text
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.');
        if ok {
            Ok(tok.text.to_string())
        } else {
            Err(self.syntax(tok.column, format!("invalid node name '{}'", tok.text)))
        }
    }

    fn value(&self, tok: &Token<'_>) -> Result<f64, ParseError> {
        parse_value(tok.text).map_err(|m| self.syntax(tok.column, m))
    }

    fn arity(&self, toks: &[Token<'_>], n: usize, usage: &str) -> Result<(), ParseError> {
        match toks.len() {
            l if l < n => Err(self.syntax(
                self.end_column,
                format!("expected {usage} ({} tokens), found {l}", n),
            )),
            l if l > n => Err(self.syntax(toks[n].column, format!("unexpected token '{}'", toks[n].text))),
            _ => Ok(()),
        }
    }
}

fn keyed_params(
    ctx: &LineCtx,
    toks: &[Token<'_>],
    allowed: &[&'static str],
) -> Result<BTreeMap<&'static str, (f64, usize)>, ParseError> {
    let mut out: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
    for tok in toks {
        let (key, val) = tok
            .text
            .split_once('=')
            .ok_or_else(|| ctx.syntax(tok.column, format!("expected key=value, found '{}'", tok.text)))?;
        let canon: &'static str = allowed
            .iter()
            .copied()
            .find(|k| k.eq_ignore_ascii_case(key))
            .ok_or_else(|| ctx.syntax(tok.column, format!("unknown parameter '{key}'")))?;
        let v = parse_value(val).map_err(|m| ctx.syntax(tok.column, m))?;
        if out.insert(canon, (v, tok.column)).is_some() {
            return Err(ctx.syntax(tok.column, format!("parameter '{canon}' given twice")));
        }
    }
    Ok(out)
}

fn require(
    ctx: &LineCtx,
    params: &BTreeMap<&'static str, (f64, usize)>,
    key: &str,
) -> Result<f64, ParseError> {
    params
        .get(key)
        .map(|(v, _)| *v)
        .ok_or_else(|| ctx.syntax(ctx.end_column, format!("missing parameter '{key}'")))
}

fn reject_inf(ctx: &LineCtx, toks: &[Token<'_>], values: &[(usize, f64)]) -> Result<(), ParseError> {
    for &(i, v) in values {
        if v.is_infinite() {
            return Err(ctx.syntax(toks[i].column, "infinite value not allowed here"));
        }
    }
    Ok(())
}

fn parse_element(ctx: &LineCtx, toks: &[Token<'_>]) -> Result<Element, ParseError> {
    let name = toks[0].text.to_string();
    let letter = name.chars().next().map(|c| c.to_ascii_uppercase());
    let kind = match letter {
        Some('R') => {
            ctx.arity(toks, 4, "R<name> a b ohms")?;
            let v = ctx.value(&toks[3])?;
            reject_inf(ctx, toks, &[(3, v)])?;
            ElementKind::Resistor {
                a: ctx.node(&toks[1])?,
                b: ctx.node(&toks[2])?,
                ohms: v,
            }
        }
        Some('V') | Some('I') => {
            ctx.arity(toks, 4, "<name> p n value")?;
            let (pos, neg) = (ctx.node(&toks[1])?, ctx.node(&toks[2])?);
            let v = ctx.value(&toks[3])?;
            reject_inf(ctx, toks, &[(3, v)])?;
            if letter == Some('V') {
                ElementKind::VSource { pos, neg, volts: v }
            } else {
                ElementKind::ISource { pos, neg, amps: v }
            }
        }
        Some('E') | Some('G') => {
            ctx.arity(toks, 6, "<name> p n cp cn value")?;
            let (pos, neg) = (ctx.node(&toks[1])?, ctx.node(&toks[2])?);
            let (ctrl_pos, ctrl_neg) = (ctx.node(&toks[3])?, ctx.node(&toks[4])?);
            let v = ctx.value(&toks[5])?;
            reject_inf(ctx, toks, &[(5, v)])?;
            if letter == Some('E') {
                ElementKind::Vcvs {
                    pos,
                    neg,
                    ctrl_pos,
                    ctrl_neg,
                    gain: v,
                }
            } else {
                ElementKind::Vccs {
                    pos,
                    neg,
                    ctrl_pos,
                    ctrl_neg,
                    gm: v,
                }
            }
        }
        Some('Q') => {
            if toks.len() < 4 {
                return Err(ctx.syntax(ctx.end_column, "expected Q<name> c b e gm=.. rpi=.. ro=.."));
            }
            let p = keyed_params(ctx, &toks[4..], &["gm", "rpi", "ro"])?;
            let (gm, rpi, ro) = (require(ctx, &p, "gm")?, require(ctx, &p, "rpi")?, require(ctx, &p, "ro")?);
            for key in ["gm", "rpi"] {
                let (v, col) = p[key];
                if v.is_infinite() {
                    return Err(ctx.syntax(col, format!("'{key}' must be finite")));
                }
            }
            ElementKind::BjtPi {
                collector: ctx.node(&toks[1])?,
                base: ctx.node(&toks[2])?,
                emitter: ctx.node(&toks[3])?,
                gm,
                rpi,
                ro,
            }
        }
        Some('U') => {
            if toks.len() < 4 {
                return Err(ctx.syntax(ctx.end_column, "expected U<name> plus minus out K=.. rout=.. [rin=..]"));
            }
            let p = keyed_params(ctx, &toks[4..], &["K", "rout", "rin"])?;
            let (gain, rout) = (require(ctx, &p, "K")?, require(ctx, &p, "rout")?);
            for key in ["K", "rout"] {
                let (v, col) = p[key];
                if v.is_infinite() {
                    return Err(ctx.syntax(col, format!("'{key}' must be finite")));
                }
            }
            ElementKind::OpAmp {
                plus: ctx.node(&toks[1])?,
                minus: ctx.node(&toks[2])?,
                out: ctx.node(&toks[3])?,
                gain,
                rout,
                rin: p.get("rin").map(|(v, _)| *v),
            }
        }
        _ => {
            return Err(ctx.err(
                toks[0].column,
                ParseErrorKind::UnknownElementKind(toks[0].text.to_string()),
            ))
        }
    };
    if name.len() < 2 {
        return Err(ctx.syntax(toks[0].column, format!("element name '{name}' needs a suffix after the kind letter")));
    }
    Ok(Element::new(name, kind))
}

/// Parses netlist text into a [`Circuit`].
///
/// Semantic checks (positive values, connectivity, annotations that name
/// real nodes) are left to [`validate`].
pub fn parse_netlist(text: &str) -> Result<Circuit, ParseError> {
    let mut circuit = Circuit::new("");
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let toks = tokenize(raw);
        let Some(first) = toks.first() else { continue };
        if first.text.starts_with('*') {
            continue;
        }
        let ctx = LineCtx {
            line: idx + 1,
            end_column: raw.chars().count() + 1,
        };
        if let Some(directive) = first.text.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "end" => break,
                "title" => {
                    let rest = raw.trim_start();
                    circuit.title = rest[first.text.len()..].trim().to_string();
                }
                "input" | "output" => {
                    ctx.arity(&toks, 3, &format!(".{directive} n+ n-"))?;
                    let pair = NodePair::new(ctx.node(&toks[1])?, ctx.node(&toks[2])?);
                    let slot = if directive.eq_ignore_ascii_case("input") {
                        &mut circuit.annotations.input_port
                    } else {
                        &mut circuit.annotations.output_port
                    };
                    if slot.is_some() {
                        return Err(ctx.syntax(first.column, format!("'.{directive}' declared twice")));
                    }
                    *slot = Some(pair);
                }
                "feedback" => {
                    if toks.len() < 2 {
                        return Err(ctx.syntax(ctx.end_column, ".feedback needs at least one element name"));
                    }
                    for t in &toks[1..] {
                        circuit.annotations.feedback_elements.insert(t.text.to_string());
                    }
                }
                _ => {
                    return Err(ctx.syntax(first.column, format!("unknown directive '{}'", first.text)));
                }
            }
            continue;
        }
        let element = parse_element(&ctx, &toks)?;
        if !seen.insert(element.name.clone()) {
            return Err(ctx.err(first.column, ParseErrorKind::DuplicateName(element.name)));
        }
        circuit.push(element);
    }
    Ok(circuit)
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    NoGround,
    FloatingNode { node: String },
    UndeclaredNode { element: String, node: String },
    DuplicateName { element: String },
    NamePrefixMismatch { element: String, expected: char },
    InvalidValue { element: String, parameter: String, value: f64 },
    UnknownPortNode { port: String, node: String },
    DegeneratePort { port: String },
    IdenticalPorts,
    UnknownFeedbackElement { element: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoGround => write!(f, "no element touches ground node '0'"),
            Violation::FloatingNode { node } => write!(f, "node '{node}' is not connected to ground"),
            Violation::UndeclaredNode { element, node } => {
                write!(f, "element '{element}' references undeclared node '{node}'")
            }
            Violation::DuplicateName { element } => write!(f, "duplicate element name '{element}'"),
            Violation::NamePrefixMismatch { element, expected } => {
                write!(f, "element '{element}' should start with '{expected}'")
            }
            Violation::InvalidValue {
                element,
                parameter,
                value,
            } => write!(f, "element '{element}': invalid {parameter} = {value}"),
            Violation::UnknownPortNode { port, node } => {
                write!(f, "{port} port references unknown node '{node}'")
            }
            Violation::DegeneratePort { port } => write!(f, "{port} port has identical terminals"),
            Violation::IdenticalPorts => write!(f, "input and output ports are identical"),
            Violation::UnknownFeedbackElement { element } => {
                write!(f, "feedback element '{element}' does not exist")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

// Which parameters must be strictly positive, and which may be infinite.
fn check_values(e: &Element, out: &mut Vec<Violation>) {
    let mut bad = |parameter: &str, value: f64| {
        out.push(Violation::InvalidValue {
            element: e.name.clone(),
            parameter: parameter.to_string(),
            value,
        })
    };
    for (key, v) in e.parameters() {
        let (positive, inf_ok) = match (&e.kind, key) {
            (ElementKind::Resistor { .. }, _) => (true, false),
            (ElementKind::BjtPi { .. }, "ro") => (true, true),
            (ElementKind::BjtPi { .. }, _) => (true, false),
            (ElementKind::OpAmp { .. }, "rin") => (true, true),
            (ElementKind::OpAmp { .. }, _) => (true, false),
            _ => (false, false),
        };
        let finite_ok = v.is_finite() || (inf_ok && v == f64::INFINITY);
        if !finite_ok || (positive && v <= 0.0) {
            bad(key, v);
        }
    }
}

/// Checks every circuit invariant and returns all violations found.
pub fn validate(c: &Circuit) -> ValidationReport {
    let mut violations = Vec::new();

    let mut names = BTreeSet::new();
    for e in &c.elements {
        if !names.insert(e.name.as_str()) {
            violations.push(Violation::DuplicateName {
                element: e.name.clone(),
            });
        }
        let expected = e.kind_letter();
        if e.name.chars().next().map(|ch| ch.to_ascii_uppercase()) != Some(expected) {
            violations.push(Violation::NamePrefixMismatch {
                element: e.name.clone(),
                expected,
            });
        }
        for t in e.terminals() {
            if !c.nodes.contains(t) {
                violations.push(Violation::UndeclaredNode {
                    element: e.name.clone(),
                    node: t.to_string(),
                });
            }
        }
        check_values(e, &mut violations);
    }

    let touches_ground = c
        .elements
        .iter()
        .any(|e| e.terminals().contains(&GROUND));
    if !touches_ground {
        violations.push(Violation::NoGround);
    } else {
        for node in floating_nodes(c) {
            violations.push(Violation::FloatingNode { node });
        }
    }

    let a = &c.annotations;
    for (label, port) in [("input", &a.input_port), ("output", &a.output_port)] {
        if let Some(p) = port {
            for n in [&p.pos, &p.neg] {
                if !c.nodes.contains(n) {
                    violations.push(Violation::UnknownPortNode {
                        port: label.to_string(),
                        node: n.clone(),
                    });
                }
            }
            if p.pos == p.neg {
                violations.push(Violation::DegeneratePort {
                    port: label.to_string(),
                });
            }
        }
    }
    if let (Some(i), Some(o)) = (&a.input_port, &a.output_port) {
        if i == o {
            violations.push(Violation::IdenticalPorts);
        }
    }
    for fb in &a.feedback_elements {
        if !names.contains(fb.as_str()) {
            violations.push(Violation::UnknownFeedbackElement {
                element: fb.clone(),
            });
        }
    }

    ValidationReport { violations }
}

fn floating_nodes(c: &Circuit) -> Vec<String> {
    let index: BTreeMap<&str, usize> = c
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut parent: Vec<usize> = (0..index.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in &c.elements {
        let ids: Vec<usize> = e
            .terminals()
            .iter()
            .filter_map(|t| index.get(t).copied())
            .collect();
        for w in ids.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let Some(&g) = index.get(GROUND) else {
        return Vec::new();
    };
    let root = find(&mut parent, g);
    c.nodes
        .iter()
        .filter(|n| {
            let i = index[n.as_str()];
            find(&mut parent, i) != root
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG4: &str = "\
* output series feedback, output at the collector
.title fig4
U1 in e b K=1000 rout=500k
Q1 c b e gm=40m rpi=2.5k ro=100k
R1 e 0 1k
R2 c 0 10k
.input in 0
.output c 0
.feedback R1
.end
";

    #[test]
    fn single_resistor() {
        let c = parse_netlist("R1 a 0 1e3").unwrap();
        assert_eq!(c.elements, vec![Element::resistor("R1", "a", "0", 1000.0)]);
        assert_eq!(c.nodes.len(), 2);
    }

    #[test]
    fn fig4_netlist() {
        let c = parse_netlist(FIG4).unwrap();
        assert_eq!(c.title, "fig4");
        assert_eq!(c.elements.len(), 4);
        assert_eq!(
            c.elements[1],
            Element::bjt("Q1", "c", "b", "e", 0.04, 2500.0, 100_000.0)
        );
        assert_eq!(
            c.elements[0],
            Element::opamp("U1", "in", "e", "b", 1000.0, 500_000.0, None)
        );
        assert_eq!(c.annotations.input_port, Some(NodePair::new("in", "0")));
        assert_eq!(c.annotations.output_port, Some(NodePair::new("c", "0")));
        assert_eq!(
            c.annotations.feedback_elements,
            BTreeSet::from(["R1".to_string()])
        );
        assert!(validate(&c).is_valid());
    }

    #[test]
    fn missing_value_is_syntax_error() {
        let err = parse_netlist("R1 a b").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(matches!(err.kind, ParseErrorKind::Syntax(_)));
    }

    #[test]
    fn error_locations() {
        let err = parse_netlist("* c\nR1 a 0 1k\nR2 a 0 1q\n").unwrap_err();
        assert_eq!((err.line, err.column), (3, 8));
        let err = parse_netlist("R1 a 0 1k\n  R1 b 0 2k\n").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateName("R1".into()));
        assert_eq!((err.line, err.column), (2, 3));
        let err = parse_netlist("X1 a 0 1k").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnknownElementKind("X1".into()));
        let err = parse_netlist("Q1 c b e gm=1m rpi=1k").unwrap_err();
        assert!(err.to_string().contains("missing parameter 'ro'"));
        let err = parse_netlist("U1 p m o K=10 rout=1 bogus=3").unwrap_err();
        assert!(err.to_string().contains("unknown parameter"));
        let err = parse_netlist(".input a").unwrap_err();
        assert_eq!(err.line, 1);
        let err = parse_netlist(".frobnicate").unwrap_err();
        assert!(err.to_string().contains("unknown directive"));
        let err = parse_netlist("R1 a 0 inf").unwrap_err();
        assert!(err.to_string().contains("infinite"));
    }

    #[test]
    fn ro_may_be_infinite() {
        let c = parse_netlist("Q1 c b 0 gm=1m rpi=100k ro=inf\nR1 c 0 1k\nR2 b 0 1k").unwrap();
        assert!(validate(&c).is_valid());
    }

    #[test]
    fn floating_node_reported() {
        let c = parse_netlist("R1 a 0 1k\nR2 x y 1k").unwrap();
        let r = validate(&c);
        assert!(r.violations.contains(&Violation::FloatingNode { node: "x".into() }));
        assert!(r.violations.contains(&Violation::FloatingNode { node: "y".into() }));
    }

    #[test]
    fn no_ground_reported() {
        let c = parse_netlist("R1 a b 1k").unwrap();
        assert_eq!(validate(&c).violations, vec![Violation::NoGround]);
    }

    #[test]
    fn value_and_annotation_violations() {
        let mut c = parse_netlist("R1 a 0 -5\nQ1 a b 0 gm=0 rpi=1k ro=1k\n.input a 0\n.output a 0\n.feedback R9").unwrap();
        c.push(Element::resistor("Rb", "b", "0", 1.0));
        let v = validate(&c).violations;
        assert!(v.iter().any(|x| matches!(x, Violation::InvalidValue { element, .. } if element == "R1")));
        assert!(v.iter().any(|x| matches!(x, Violation::InvalidValue { element, parameter, .. } if element == "Q1" && parameter == "gm")));
        assert!(v.contains(&Violation::IdenticalPorts));
        assert!(v.contains(&Violation::UnknownFeedbackElement { element: "R9".into() }));
    }

    #[test]
    fn canonical_text_reparses_identically() {
        let c = parse_netlist(FIG4).unwrap();
        let again = parse_netlist(&c.to_string()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_string(), c.to_string());
    }
}
