//! Side-by-side evaluation of the output impedance by every engine.
//!
//! For each output case the report holds five numbers: the closed-form
//! approximation, the exact expression, Mason's formula on a flow graph
//! derived from the circuit's nodal equations, Mason's formula on the
//! hand-written flow graph of the stage, and the nodal solve itself.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feedback::{
    closed_form_rx_case1, closed_form_rx_case2, exact_rx_case1, exact_rx_case2, AmplifierParams,
    OutputCase, ParamError,
};
use crate::mna::{self, Excitation, Impedance, MnaSystem, Unknown, TEST_SOURCE};
use crate::netlist::{Circuit, Element, NodePair, PortAnnotations};
use crate::sfg::{self, Equation, FlowGraph};
use crate::smallsignal::{linearize, LinearCircuit, Primitive, PrimitiveKind};
use crate::units::format_ohms;

/// Node at which the test source is attached in the generated circuits.
pub const TEST_NODE: &str = "x";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrossCheckError {
    #[error("{engine}: {message}")]
    Engine { engine: &'static str, message: String },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("unknown sweep axis '{0}'")]
    UnknownAxis(String),
}

fn engine_err(engine: &'static str) -> impl Fn(&dyn fmt::Display) -> CrossCheckError {
    move |e| CrossCheckError::Engine {
        engine,
        message: e.to_string(),
    }
}

/// Transistor model used by the circuit-based engines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircuitModel {
    /// Hybrid-π as is: base current returns through the emitter.
    #[default]
    Full,
    /// Base current drawn to ground instead of the emitter, the
    /// `g_m + 1/r_π ≈ g_m` idealization.
    UnityAlpha,
}

impl fmt::Display for CircuitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CircuitModel::Full => "full",
            CircuitModel::UnityAlpha => "unity-alpha",
        })
    }
}

/// The stage of the given case with the test node `x` at its output.
///
/// First case: the op-amp senses the emitter on its inverting input and
/// drives the base; `x` is the collector and `R1` ties the emitter to
/// ground. Second case: the op-amp senses the collector on its
/// non-inverting input; `x` is the emitter and `R1` ties the collector to
/// ground. The load `R2` is left out.
pub fn case_circuit(case: OutputCase, p: &AmplifierParams) -> Circuit {
    let (q, u, r1) = match case {
        OutputCase::Collector => (
            Element::bjt("Q1", TEST_NODE, "b", "e", p.g_m, p.r_pi, p.r_o),
            Element::opamp("U1", "0", "e", "b", p.k, p.r_out, p.r_in),
            Element::resistor("R1", "e", "0", p.r1),
        ),
        OutputCase::Emitter => (
            Element::bjt("Q1", "c", "b", TEST_NODE, p.g_m, p.r_pi, p.r_o),
            Element::opamp("U1", "c", "0", "b", p.k, p.r_out, p.r_in),
            Element::resistor("R1", "c", "0", p.r1),
        ),
    };
    let mut c = Circuit::new(format!("output stage, case {}", case.number()))
        .with(u)
        .with(q)
        .with(r1);
    c.annotations = PortAnnotations {
        input_port: None,
        output_port: Some(NodePair::to_ground(TEST_NODE)),
        feedback_elements: ["R1".to_string()].into(),
    };
    c
}

/// Moves the return path of every transistor's `r_π` from the emitter to
/// ground, keeping its controlling voltage.
pub fn unity_alpha(lc: &LinearCircuit) -> LinearCircuit {
    let mut out = lc.clone();
    for p in out.elements.iter_mut() {
        if !p.name.ends_with(".rpi") {
            continue;
        }
        if let PrimitiveKind::Resistor { a, b, ohms } = &p.kind {
            *p = Primitive::vccs(&p.name, a, crate::netlist::GROUND, a, b, 1.0 / ohms);
        }
    }
    out.nodes.insert(crate::netlist::GROUND.to_string());
    out
}

pub fn case_linear(
    case: OutputCase,
    p: &AmplifierParams,
    model: CircuitModel,
) -> Result<LinearCircuit, CrossCheckError> {
    let lc = linearize(&case_circuit(case, p)).map_err(|e| engine_err("linearize")(&e))?;
    Ok(match model {
        CircuitModel::Full => lc,
        CircuitModel::UnityAlpha => unity_alpha(&lc),
    })
}

/// Pairs every row of `a` with a distinct column holding a nonzero entry,
/// preferring the diagonal. Returns `match_of_row`.
fn row_matching(a: &crate::linalg::Matrix) -> Option<Vec<usize>> {
    let n = a.rows();
    let mut col_owner: Vec<Option<usize>> = vec![None; n];
    let mut row_col: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if a[(i, i)] != 0.0 {
            col_owner[i] = Some(i);
            row_col[i] = Some(i);
        }
    }
    fn augment(
        a: &crate::linalg::Matrix,
        i: usize,
        seen: &mut [bool],
        col_owner: &mut [Option<usize>],
        row_col: &mut [Option<usize>],
    ) -> bool {
        for j in 0..a.cols() {
            if a[(i, j)] == 0.0 || seen[j] {
                continue;
            }
            seen[j] = true;
            let free = match col_owner[j] {
                None => true,
                Some(r) => augment(a, r, seen, col_owner, row_col),
            };
            if free {
                col_owner[j] = Some(i);
                row_col[i] = Some(j);
                return true;
            }
        }
        false
    }
    for i in 0..n {
        if row_col[i].is_none() {
            let mut seen = vec![false; n];
            if !augment(a, i, &mut seen, &mut col_owner, &mut row_col) {
                return None;
            }
        }
    }
    row_col.into_iter().collect()
}

/// Rewrites `A x = b·source` as one defining equation per unknown, each row
/// solved for its matched unknown.
pub fn system_equations(sys: &MnaSystem, b: &[f64], source: &str) -> Option<Vec<Equation>> {
    let m = row_matching(&sys.matrix)?;
    let name = |j: usize| sys.unknowns[j].to_string();
    let mut eqs = Vec::with_capacity(sys.dimension);
    for (i, &j) in m.iter().enumerate() {
        let pivot = sys.matrix[(i, j)];
        let mut terms: Vec<(String, f64)> = (0..sys.dimension)
            .filter(|&k| k != j && sys.matrix[(i, k)] != 0.0)
            .map(|k| (name(k), -sys.matrix[(i, k)] / pivot))
            .collect();
        if b[i] != 0.0 {
            terms.push((source.to_string(), b[i] / pivot));
        }
        eqs.push(Equation {
            lhs: name(j),
            terms,
        });
    }
    Some(eqs)
}

/// Driving-point impedance at `port` from Mason's formula on the flow graph
/// of the probed circuit's nodal equations.
pub fn mason_impedance(
    lc: &LinearCircuit,
    port: &NodePair,
    excitation: Excitation,
) -> Result<Impedance, CrossCheckError> {
    let err = engine_err("mason");
    let probed = mna::with_test_source(lc, port, excitation).map_err(|e| err(&e))?;
    let sys = mna::assemble(&probed);
    let b = sys
        .source_vector(&probed, TEST_SOURCE)
        .expect("test source is independent");
    let mut eqs = system_equations(&sys, &b, "u").ok_or_else(|| CrossCheckError::Engine {
        engine: "mason",
        message: "nodal equations are structurally singular".into(),
    })?;
    let v = |n: &str| Unknown::NodeVoltage(n.to_string()).to_string();
    let out = match excitation {
        Excitation::Voltage => {
            let i = Unknown::BranchCurrent(TEST_SOURCE.into()).to_string();
            Equation {
                lhs: "iX".into(),
                terms: vec![(i, -1.0)],
            }
        }
        Excitation::Current => {
            let mut terms = Vec::new();
            for (node, sign) in [(&port.pos, 1.0), (&port.neg, -1.0)] {
                if node != crate::netlist::GROUND {
                    terms.push((v(node), sign));
                }
            }
            Equation {
                lhs: "vX".into(),
                terms,
            }
        }
    };
    let sink = out.lhs.clone();
    eqs.push(out);
    let g = sfg::from_linear_system(&eqs).map_err(|e| err(&e))?;
    let gain = sfg::mason_gain(&g, "u", &sink).map_err(|e| err(&e))?;
    Ok(match excitation {
        Excitation::Voltage if gain == 0.0 => Impedance::Infinite,
        Excitation::Voltage => Impedance::Finite(1.0 / gain),
        Excitation::Current => Impedance::Finite(gain),
    })
}

/// Hand-written flow graph of the stage (`R_in = ∞`), with its source and
/// sink node names.
///
/// First case, driven by `vX`: the emitter-branch current `io`, the
/// emitter voltage `vC`, the base-emitter voltage `vpi` and the op-amp
/// input `vdiff`. Second case, driven by `iX`: the same names with `vC` at
/// the collector, written with `g_m + 1/r_π ≈ g_m`.
pub fn reference_graph(case: OutputCase, p: &AmplifierParams) -> (FlowGraph, &'static str, &'static str) {
    let (gm, rpi, ro, r1, rout, k) = (p.g_m, p.r_pi, p.r_o, p.r1, p.r_out, p.k);
    let eqs = match case {
        OutputCase::Collector => {
            let div = rpi / (rout + rpi);
            vec![
                Equation::new("io", &[("vpi", 1.0 / rpi + gm), ("vX", 1.0 / ro), ("vC", -1.0 / ro)]),
                Equation::new("vC", &[("io", r1)]),
                Equation::new("iX", &[("vX", 1.0 / ro), ("vC", -1.0 / ro), ("vpi", gm)]),
                Equation::new("vpi", &[("vdiff", k * div), ("vC", -div)]),
                Equation::new("vdiff", &[("io", -r1)]),
            ]
        }
        OutputCase::Emitter => vec![
            Equation::new("vpi", &[("iX", -1.0 / gm), ("vC", -1.0 / (gm * ro)), ("vX", 1.0 / (gm * ro))]),
            Equation::new("vC", &[("io", r1)]),
            Equation::new("vX", &[("io", ro), ("vpi", gm * ro), ("vC", 1.0)]),
            Equation::new("vdiff", &[("vpi", (rout + rpi) / (k * rpi)), ("vX", 1.0 / k)]),
            Equation::new("io", &[("vdiff", 1.0 / r1)]),
        ],
    };
    let g = sfg::from_linear_system(&eqs).expect("one equation per variable");
    match case {
        OutputCase::Collector => (g, "vX", "iX"),
        OutputCase::Emitter => (g, "iX", "vX"),
    }
}

/// `R_X` from Mason's formula on [`reference_graph`].
pub fn reference_mason_rx(case: OutputCase, p: &AmplifierParams) -> Result<f64, CrossCheckError> {
    let (g, src, dst) = reference_graph(case, p);
    let gain = sfg::mason_gain(&g, src, dst).map_err(|e| engine_err("mason_reference")(&e))?;
    Ok(match case {
        OutputCase::Collector => 1.0 / gain,
        OutputCase::Emitter => gain,
    })
}

/// Acceptance rule for the closed-form versus exact-expression error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClosedTolerance {
    /// Error must lie in `expected ± half_width`.
    Band { expected: f64, half_width: f64 },
    /// Error must not exceed `max`.
    Max { max: f64 },
    Unchecked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Largest relative disagreement allowed between exact engines.
    pub engine: f64,
    pub closed: ClosedTolerance,
}

pub const ENGINE_TOLERANCE: f64 = 1e-6;

impl Tolerances {
    /// Error bands reported for the default parameter set: 0.5 % ± 0.05 pp
    /// for the first case and 5.01 % ± 0.1 pp for the second.
    pub fn paper(case: OutputCase) -> Self {
        let (expected, half_width) = match case {
            OutputCase::Collector => (0.005, 0.0005),
            OutputCase::Emitter => (0.0501, 0.001),
        };
        Tolerances {
            engine: ENGINE_TOLERANCE,
            closed: ClosedTolerance::Band {
                expected,
                half_width,
            },
        }
    }

    pub fn engines_only() -> Self {
        Tolerances {
            engine: ENGINE_TOLERANCE,
            closed: ClosedTolerance::Unchecked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub engines_agree: bool,
    pub closed_form_ok: bool,
    pub pass: bool,
    /// Engine pairs whose disagreement exceeds the engine tolerance.
    pub disagreements: Vec<String>,
}

pub const ENGINES: [&str; 5] = ["closed_form", "exact_formula", "mason", "mason_reference", "mna"];
const EXACT_ENGINES: [&str; 4] = ["exact_formula", "mason", "mason_reference", "mna"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckReport {
    pub quantity: String,
    pub case: u8,
    pub model: CircuitModel,
    pub values: BTreeMap<String, f64>,
    /// `|a − b| / max(|a|, |b|)` for every engine pair, keyed `a~b`.
    pub relative_errors: BTreeMap<String, f64>,
    /// `|closed − exact| / |exact|`.
    pub closed_vs_exact: f64,
    pub parameters: AmplifierParams,
    pub beta: f64,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

fn pair_key(a: &str, b: &str) -> String {
    format!("{a}~{b}")
}

pub fn run_case(
    case: OutputCase,
    p: &AmplifierParams,
    tol: &Tolerances,
) -> Result<CrossCheckReport, CrossCheckError> {
    run_case_model(case, p, tol, CircuitModel::Full)
}

pub fn run_case_model(
    case: OutputCase,
    p: &AmplifierParams,
    tol: &Tolerances,
    model: CircuitModel,
) -> Result<CrossCheckReport, CrossCheckError> {
    p.validate()?;
    let (closed, exact) = match case {
        OutputCase::Collector => (closed_form_rx_case1(p).r_x, exact_rx_case1(p)),
        OutputCase::Emitter => (closed_form_rx_case2(p), exact_rx_case2(p)),
    };
    let lc = case_linear(case, p, model)?;
    let port = NodePair::to_ground(TEST_NODE);
    let mna_rx = mna::driving_point_impedance(&lc, &port)
        .map_err(|e| engine_err("mna")(&e))?
        .ohms();
    // The hand graphs drive the first case with a voltage and the second
    // with a current; the circuit graph follows suit.
    let excitation = match case {
        OutputCase::Collector => Excitation::Voltage,
        OutputCase::Emitter => Excitation::Current,
    };
    let mason_rx = mason_impedance(&lc, &port, excitation)?.ohms();
    let reference = reference_mason_rx(case, p)?;

    let values: BTreeMap<String, f64> = ENGINES
        .iter()
        .zip([closed, exact, mason_rx, reference, mna_rx])
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let mut relative_errors = BTreeMap::new();
    for (i, a) in ENGINES.iter().enumerate() {
        for b in &ENGINES[i + 1..] {
            relative_errors.insert(pair_key(a, b), relative_error(values[*a], values[*b]));
        }
    }
    let mut disagreements = Vec::new();
    for (i, a) in EXACT_ENGINES.iter().enumerate() {
        for b in &EXACT_ENGINES[i + 1..] {
            let e = relative_errors[&pair_key(a, b)];
            if e.is_nan() || e > tol.engine {
                disagreements.push(pair_key(a, b));
            }
        }
    }
    let closed_vs_exact = (closed - exact).abs() / exact.abs();
    let closed_form_ok = match tol.closed {
        ClosedTolerance::Band {
            expected,
            half_width,
        } => (closed_vs_exact - expected).abs() <= half_width,
        ClosedTolerance::Max { max } => closed_vs_exact <= max,
        ClosedTolerance::Unchecked => true,
    };
    let engines_agree = disagreements.is_empty();
    Ok(CrossCheckReport {
        quantity: format!("R_X case {}", case.number()),
        case: case.number(),
        model,
        values,
        relative_errors,
        closed_vs_exact,
        parameters: *p,
        beta: p.beta(),
        tolerances: *tol,
        verdict: Verdict {
            engines_agree,
            closed_form_ok,
            pass: engines_agree && closed_form_ok,
            disagreements,
        },
    })
}

/// One report per grid value of `axis`, in grid order.
pub fn sweep(
    case: OutputCase,
    p: &AmplifierParams,
    axis: &str,
    grid: &[f64],
    tol: &Tolerances,
    model: CircuitModel,
) -> Result<Vec<CrossCheckReport>, CrossCheckError> {
    if p.get(axis).is_err() {
        return Err(CrossCheckError::UnknownAxis(axis.to_string()));
    }
    grid.par_iter()
        .map(|&v| run_case_model(case, &p.with(axis, v)?, tol, model))
        .collect()
}

impl CrossCheckReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} ({} model)", self.quantity, self.model);
        let _ = writeln!(s, "parameters: {}", self.parameters);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<18} {:>16}", "engine", "value");
        for k in ENGINES {
            let _ = writeln!(s, "{:<18} {:>16}", k, format_ohms(self.values[k]));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<34} {:>12}", "pair", "rel. error");
        for (k, v) in &self.relative_errors {
            let _ = writeln!(s, "{:<34} {:>12.3e}", k, v);
        }
        let _ = writeln!(
            s,
            "{:<34} {:>11.4}%",
            "closed_vs_exact",
            self.closed_vs_exact * 100.0
        );
        let _ = writeln!(s);
        let mut status = vec![format!(
            "engines {} (tol {:e})",
            if self.verdict.engines_agree { "agree" } else { "DISAGREE" },
            self.tolerances.engine
        )];
        match self.tolerances.closed {
            ClosedTolerance::Band {
                expected,
                half_width,
            } => status.push(format!(
                "closed form {} (expected {:.2}% ± {:.2} pp)",
                if self.verdict.closed_form_ok { "ok" } else { "OUT OF BAND" },
                expected * 100.0,
                half_width * 100.0
            )),
            ClosedTolerance::Max { max } => status.push(format!(
                "closed form {} (max {:.3}%)",
                if self.verdict.closed_form_ok { "ok" } else { "TOO FAR" },
                max * 100.0
            )),
            ClosedTolerance::Unchecked => {}
        }
        let _ = writeln!(s, "{}", status.join("; "));
        if !self.verdict.disagreements.is_empty() {
            let _ = writeln!(s, "disagreeing pairs: {}", self.verdict.disagreements.join(", "));
        }
        let _ = writeln!(s, "verdict: {}", if self.verdict.pass { "PASS" } else { "FAIL" });
        s
    }
}

/// Compact one-line-per-point table for sweeps.
pub fn sweep_table(axis: &str, reports: &[CrossCheckReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>10} {:>6}",
        axis, "closed_form", "exact_formula", "mason", "mason_ref", "mna", "err %", "pass"
    );
    for r in reports {
        let v = |k: &str| format!("{:.6e}", r.values[k]);
        let _ = writeln!(
            s,
            "{:>12} {:>14} {:>14} {:>14} {:>14} {:>14} {:>10.4} {:>6}",
            format!("{:e}", r.parameters.get(axis).unwrap_or(f64::NAN)),
            v("closed_form"),
            v("exact_formula"),
            v("mason"),
            v("mason_reference"),
            v("mna"),
            r.closed_vs_exact * 100.0,
            if r.verdict.pass { "yes" } else { "no" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfg::{enumerate_forward_paths, enumerate_loops, graph_determinant};

    fn paper() -> AmplifierParams {
        AmplifierParams::paper_defaults()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        relative_error(a, b) <= rel
    }

    #[test]
    fn case1_default_point() {
        let r = run_case(OutputCase::Collector, &paper(), &Tolerances::paper(OutputCase::Collector)).unwrap();
        for k in EXACT_ENGINES {
            assert!(close(r.values[k], 6758132.69038909, 1e-9), "{k}: {}", r.values[k]);
        }
        assert!(close(r.values["closed_form"], 6723980.678746291, 1e-12));
        assert!(r.verdict.pass, "{}", r.to_table());
    }

    #[test]
    fn case2_full_model_disagrees_with_expression() {
        let r = run_case(OutputCase::Emitter, &paper(), &Tolerances::paper(OutputCase::Emitter)).unwrap();
        assert!(close(r.values["mna"], 1046571.8227729474, 1e-9));
        assert!(close(r.values["mason"], r.values["mna"], 1e-9));
        assert!(close(r.values["mason_reference"], 956986.6698405142, 1e-12));
        assert!(r.verdict.closed_form_ok);
        assert!(!r.verdict.engines_agree);
    }

    #[test]
    fn case2_unity_alpha_matches_expression() {
        let r = run_case_model(
            OutputCase::Emitter,
            &paper(),
            &Tolerances::paper(OutputCase::Emitter),
            CircuitModel::UnityAlpha,
        )
        .unwrap();
        assert!(r.verdict.pass, "{}", r.to_table());
    }

    #[test]
    fn reference_graph_shapes() {
        let p = paper();
        let (g, s, t) = reference_graph(OutputCase::Collector, &p);
        assert_eq!(enumerate_loops(&g).unwrap().len(), 3);
        let paths = enumerate_forward_paths(&g, s, t).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(paths.iter().any(|q| q.nodes.len() == 2 && close(q.gain, 1.0 / p.r_o, 1e-15)));
        // The three loop gains.
        let div = p.r_pi / (p.r_out + p.r_pi);
        let gpi = p.g_m + 1.0 / p.r_pi;
        let mut want = [
            p.k * div * gpi * -p.r1,
            p.r1 * (-1.0 / p.r_o),
            p.r1 * -div * gpi,
        ];
        let mut got: Vec<f64> = enumerate_loops(&g).unwrap().iter().map(|l| l.gain).collect();
        want.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in want.iter().zip(&got) {
            assert!(close(*a, *b, 1e-14));
        }

        let (g, s, t) = reference_graph(OutputCase::Emitter, &p);
        let paths = enumerate_forward_paths(&g, s, t).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths.iter().any(|q| close(q.gain, -1.0 / p.g_m * p.g_m * p.r_o, 1e-15)));
        let beta = p.beta();
        let delta = -(p.r_o * beta + p.r_out + p.r_pi) / (p.r1 * p.k * beta);
        assert!(close(graph_determinant(&g).unwrap(), delta, 1e-12));
    }

    #[test]
    fn mason_impedance_series_pair() {
        let lc = LinearCircuit::new()
            .with(Primitive::resistor("R1", "a", "b", 1e3))
            .with(Primitive::resistor("R2", "b", "0", 2e3));
        let port = NodePair::to_ground("a");
        for ex in [Excitation::Voltage, Excitation::Current] {
            assert!(close(mason_impedance(&lc, &port, ex).unwrap().ohms(), 3e3, 1e-12));
        }
    }

    #[test]
    fn sweep_order_and_errors() {
        let p = paper();
        let tol = Tolerances::engines_only();
        let grid = [10.0, 100.0, 1000.0];
        let rs = sweep(OutputCase::Collector, &p, "K", &grid, &tol, CircuitModel::Full).unwrap();
        assert_eq!(rs.len(), 3);
        for (r, k) in rs.iter().zip(grid) {
            assert_eq!(r.parameters.k, k);
        }
        assert!(rs.windows(2).all(|w| w[0].values["mna"] < w[1].values["mna"]));
        assert!(sweep(OutputCase::Collector, &p, "K", &[], &tol, CircuitModel::Full)
            .unwrap()
            .is_empty());
        assert_eq!(
            sweep(OutputCase::Collector, &p, "Q", &grid, &tol, CircuitModel::Full),
            Err(CrossCheckError::UnknownAxis("Q".into()))
        );
        let one = sweep(OutputCase::Collector, &p, "R1", &[p.r1], &tol, CircuitModel::Full).unwrap();
        assert_eq!(one[0], run_case(OutputCase::Collector, &p, &tol).unwrap());
    }

    #[test]
    fn deterministic_json() {
        let tol = Tolerances::paper(OutputCase::Collector);
        let a = run_case(OutputCase::Collector, &paper(), &tol).unwrap().to_json();
        let b = run_case(OutputCase::Collector, &paper(), &tol).unwrap().to_json();
        assert_eq!(a, b);
        let v: serde_json::Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["case"], 1);
        assert!(v["values"]["mna"].as_f64().unwrap() > 6.7e6);
    }
}
