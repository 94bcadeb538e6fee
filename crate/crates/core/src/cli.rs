//! Command-line front end.
//!
//! Exit codes: 0 on success or a passing check, 1 on any error, 2 when the
//! input is well formed but rejected (irrelevant topology, failed verdict).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::crosscheck::{
    self, sweep_table, CircuitModel, ClosedTolerance, CrossCheckReport, Tolerances, ENGINE_TOLERANCE,
};
use crate::feedback::{
    analyze_circuit, feedback_analysis, match_case, AmplifierParams, OutputCase, Validity,
};
use crate::mna::{self, Excitation, Impedance};
use crate::netlist::{parse_netlist, validate, Circuit, ElementKind, NodePair};
use crate::sfg::{self, FlowGraph};
use crate::smallsignal::{linearize, LinearCircuit, Primitive};
use crate::units::{format_ohms, parse_value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REJECTED: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Full,
    UnityAlpha,
}

impl From<ModelArg> for CircuitModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Full => CircuitModel::Full,
            ModelArg::UnityAlpha => CircuitModel::UnityAlpha,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "feedback-lens", version, about = "Small-signal feedback amplifier analysis")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, env = "FEEDBACK_LENS_FORMAT", default_value = "table")]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a netlist, printing its canonical form.
    Parse { file: PathBuf },
    /// Classify the feedback topology of an annotated netlist.
    Classify { file: PathBuf },
    /// Classify and compute the loading of the feedback network.
    Loading { file: PathBuf },
    /// Driving-point impedance at a port.
    Impedance {
        file: PathBuf,
        /// Port as `node` (to ground) or `pos,neg`; defaults to the `.output` port.
        #[arg(long)]
        port: Option<String>,
        /// Also evaluate Mason's formula and, for a recognized stage, the closed forms.
        #[arg(long)]
        all_engines: bool,
    },
    /// Compare closed-form, Mason and nodal output impedances.
    Crosscheck(CrosscheckArgs),
    /// Mason's gain formula on an edge-list flow graph.
    Mason {
        file: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Cap on enumerated loops and paths.
        #[arg(long, default_value_t = sfg::DEFAULT_LIMIT)]
        limit: usize,
    },
}

#[derive(Debug, Args)]
pub struct CrosscheckArgs {
    /// 1: output at the collector; 2: output at the emitter.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub case: u8,
    /// Start from the default parameter set (also the fallback).
    #[arg(long)]
    pub paper_defaults: bool,
    /// JSON object of parameter overrides, e.g. {"K": 100, "rout": 10}.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Parameter override `key=value` (K, rout, R1, R2, gm, rpi, ro, RE, RS, Rin).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, value_enum, default_value = "full")]
    pub model: ModelArg,
    /// Allowed relative disagreement between exact engines.
    #[arg(long, default_value_t = ENGINE_TOLERANCE)]
    pub engine_tol: f64,
    /// Closed-form error band `expected,half_width` (fractions).
    #[arg(long, conflicts_with = "closed_max")]
    pub closed_band: Option<String>,
    /// Largest allowed closed-form error (fraction).
    #[arg(long)]
    pub closed_max: Option<f64>,
    /// Sweep `axis=v1,v2,...`.
    #[arg(long)]
    pub sweep: Option<String>,
}

/// Parses the process arguments and runs; returns the exit code.
pub fn run() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    let mut out = String::new();
    let mut err = String::new();
    let code = run_with(&args, &mut out, &mut err);
    print!("{out}");
    eprint!("{err}");
    code
}

/// Runs with explicit arguments, collecting stdout and stderr text.
pub fn run_with(args: &[String], out: &mut String, err: &mut String) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    out.push_str(&text);
                    EXIT_OK
                }
                _ => {
                    err.push_str(&text);
                    EXIT_ERROR
                }
            };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "{msg}");
            EXIT_ERROR
        }
    }
}

type CmdResult = Result<i32, String>;

fn dispatch(cli: &Cli, out: &mut String) -> CmdResult {
    let fmt = cli.format;
    match &cli.command {
        Command::Parse { file } => cmd_parse(file, fmt, out),
        Command::Classify { file } => cmd_classify(file, fmt, out),
        Command::Loading { file } => cmd_loading(file, fmt, out),
        Command::Impedance {
            file,
            port,
            all_engines,
        } => cmd_impedance(file, port.as_deref(), *all_engines, fmt, out),
        Command::Crosscheck(a) => cmd_crosscheck(a, fmt, out),
        Command::Mason {
            file,
            from,
            to,
            limit,
        } => cmd_mason(file, from, to, *limit, fmt, out),
    }
}

fn read(file: &Path) -> Result<String, String> {
    std::fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))
}

fn load_circuit(file: &Path) -> Result<Circuit, String> {
    let text = read(file)?;
    parse_netlist(&text).map_err(|e| format!("{}:{e}", file.display()))
}

/// Parses and requires a valid circuit.
fn load_valid(file: &Path) -> Result<Circuit, String> {
    let c = load_circuit(file)?;
    let report = validate(&c);
    if report.is_valid() {
        Ok(c)
    } else {
        let lines: Vec<String> = report
            .violations
            .iter()
            .map(|v| format!("{}: {v}", file.display()))
            .collect();
        Err(lines.join("\n"))
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).unwrap_or_else(|e| format!("{{\"error\": \"{e}\"}}"));
    s.push('\n');
    s
}

fn cmd_parse(file: &Path, fmt: Format, out: &mut String) -> CmdResult {
    let c = load_circuit(file)?;
    let report = validate(&c);
    match fmt {
        Format::Json => {
            #[derive(Serialize)]
            struct ParseOut<'a> {
                circuit: &'a Circuit,
                valid: bool,
                violations: Vec<String>,
            }
            out.push_str(&json(&ParseOut {
                circuit: &c,
                valid: report.is_valid(),
                violations: report.violations.iter().map(|v| v.to_string()).collect(),
            }));
        }
        Format::Table => {
            out.push_str(&c.to_string());
            for v in &report.violations {
                let _ = writeln!(out, "* invalid: {v}");
            }
        }
    }
    if report.is_valid() {
        Ok(EXIT_OK)
    } else {
        Err(report
            .violations
            .iter()
            .map(|v| format!("{}: {v}", file.display()))
            .collect::<Vec<_>>()
            .join("\n"))
    }
}

fn cmd_classify(file: &Path, fmt: Format, out: &mut String) -> CmdResult {
    let c = load_valid(file)?;
    let r = crate::feedback::classify(&c).map_err(|e| format!("{}: {e}", file.display()))?;
    match fmt {
        Format::Json => out.push_str(&json(&r)),
        Format::Table => {
            let _ = writeln!(out, "{}", r.topology);
        }
    }
    Ok(match r.topology.validity {
        Validity::Valid => EXIT_OK,
        Validity::Irrelevant => EXIT_REJECTED,
    })
}

fn cmd_loading(file: &Path, fmt: Format, out: &mut String) -> CmdResult {
    let c = load_valid(file)?;
    let report = analyze_circuit(&c).map_err(|e| format!("{}: {e}", file.display()))?;
    let analysis = match (&report.loading, report.classification.output_case) {
        (Some(m), Some(_)) => c
            .annotations
            .output_port
            .as_ref()
            .and_then(|port| match_case(&c, port))
            .map(|cm| feedback_analysis(report.classification.topology, m.clone(), cm.case, &cm.params)),
        _ => None,
    };
    match fmt {
        Format::Json => {
            #[derive(Serialize)]
            struct LoadingOut<'a> {
                #[serde(flatten)]
                report: &'a crate::feedback::FeedbackReport,
                analysis: Option<crate::feedback::FeedbackAnalysis>,
            }
            out.push_str(&json(&LoadingOut {
                report: &report,
                analysis,
            }));
        }
        Format::Table => {
            let _ = writeln!(out, "topology: {}", report.classification.topology);
            if let Some(p) = &report.classification.ports {
                let _ = writeln!(out, "feedback ports: input {}, output {}", p.input, p.output);
            }
            if let Some(m) = &report.loading {
                let _ = writeln!(out, "R_if: {}", m.r_if);
                let _ = writeln!(out, "R_of: {}", m.r_of);
                let unit = m.f_kind.unit();
                let sep = if unit.is_empty() { "" } else { " " };
                let _ = writeln!(out, "f:    {:.6e}{sep}{unit}", m.f);
            }
            if let Some(a) = analysis {
                let _ = writeln!(out, "case: {} ({:?} output)", a.case.number(), a.case);
                let _ = writeln!(out, "1+af: {:.6}", a.one_plus_af);
                let _ = writeln!(out, "R_bf: {}", format_ohms(a.r_bf));
                let _ = writeln!(out, "R_X:  {}", format_ohms(a.r_x));
                let _ = writeln!(out, "R_out: {}", format_ohms(a.r_out));
            }
        }
    }
    Ok(match report.classification.topology.validity {
        Validity::Valid => EXIT_OK,
        Validity::Irrelevant => EXIT_REJECTED,
    })
}

fn parse_port(s: &str) -> Result<NodePair, String> {
    let parts: Vec<&str> = s
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect();
    match parts.as_slice() {
        [p] => Ok(NodePair::to_ground(*p)),
        [p, n] => Ok(NodePair::new(*p, *n)),
        _ => Err(format!("invalid port '{s}': expected 'node' or 'pos,neg'")),
    }
}

/// Grounds the declared input node when nothing drives it, so that the
/// measurement sees a zeroed input rather than a floating node.
fn ground_undriven_input(c: &Circuit, lc: &mut LinearCircuit) {
    let Some(input) = &c.annotations.input_port else {
        return;
    };
    let driven = c.elements.iter().any(|e| match &e.kind {
        ElementKind::VSource { pos, neg, .. } | ElementKind::ISource { pos, neg, .. } => {
            (pos == &input.pos && neg == &input.neg) || (pos == &input.neg && neg == &input.pos)
        }
        _ => false,
    });
    if !driven && input.pos != input.neg && lc.nodes.contains(&input.pos) {
        lc.push(Primitive::vsource("__input", &input.pos, &input.neg, 0.0));
    }
}

fn cmd_impedance(
    file: &Path,
    port: Option<&str>,
    all_engines: bool,
    fmt: Format,
    out: &mut String,
) -> CmdResult {
    let c = load_valid(file)?;
    let port = match port {
        Some(p) => parse_port(p)?,
        None => c
            .annotations
            .output_port
            .clone()
            .ok_or_else(|| format!("{}: no --port given and no .output directive", file.display()))?,
    };
    let mut lc = linearize(&c).map_err(|e| format!("{}: {e}", file.display()))?;
    ground_undriven_input(&c, &mut lc);
    let z = mna::driving_point_impedance(&lc, &port).map_err(|e| format!("{}: mna: {e}", file.display()))?;

    #[derive(Serialize)]
    struct ImpedanceOut {
        port: NodePair,
        mna: Impedance,
        #[serde(skip_serializing_if = "Option::is_none")]
        mason: Option<Impedance>,
        #[serde(skip_serializing_if = "Option::is_none")]
        case: Option<u8>,
        #[serde(skip_serializing_if = "Option::is_none")]
        closed_form: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        exact_formula: Option<f64>,
    }
    let mut rep = ImpedanceOut {
        port: port.clone(),
        mna: z,
        mason: None,
        case: None,
        closed_form: None,
        exact_formula: None,
    };
    if all_engines {
        rep.mason = Some(
            crosscheck::mason_impedance(&lc, &port, Excitation::Voltage)
                .map_err(|e| format!("{}: {e}", file.display()))?,
        );
        if let Some(cm) = match_case(&c, &port) {
            rep.case = Some(cm.case.number());
            rep.closed_form = Some(cm.closed_form());
            rep.exact_formula = Some(cm.exact_formula());
        }
    }
    match fmt {
        Format::Json => out.push_str(&json(&rep)),
        Format::Table if !all_engines => {
            let _ = writeln!(out, "{z}");
        }
        Format::Table => {
            let _ = writeln!(out, "port {}", rep.port);
            let _ = writeln!(out, "{:<14} {}", "mna", rep.mna);
            if let Some(m) = rep.mason {
                let _ = writeln!(out, "{:<14} {}", "mason", m);
            }
            if let (Some(case), Some(cf), Some(ex)) = (rep.case, rep.closed_form, rep.exact_formula) {
                let _ = writeln!(out, "{:<14} {} (case {case})", "closed_form", format_ohms(cf));
                let _ = writeln!(out, "{:<14} {} (case {case})", "exact_formula", format_ohms(ex));
            }
        }
    }
    Ok(EXIT_OK)
}

fn apply_overrides(a: &CrosscheckArgs) -> Result<AmplifierParams, String> {
    let mut p = AmplifierParams::paper_defaults();
    if let Some(path) = &a.params {
        let text = read(path)?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| format!("{}:{}: {e}", path.display(), e.line()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| format!("{}: expected a JSON object of parameters", path.display()))?;
        for (k, val) in obj {
            let x = match val {
                serde_json::Value::Null => f64::INFINITY,
                serde_json::Value::String(s) => parse_value(s).map_err(|e| format!("{}: {k}: {e}", path.display()))?,
                other => other
                    .as_f64()
                    .ok_or_else(|| format!("{}: {k}: expected a number", path.display()))?,
            };
            p.set(k, x).map_err(|e| format!("{}: {e}", path.display()))?;
        }
    }
    for s in &a.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| format!("--set {s}: expected KEY=VALUE"))?;
        let x = parse_value(v.trim()).map_err(|e| format!("--set {s}: {e}"))?;
        p.set(k.trim(), x).map_err(|e| format!("--set {s}: {e}"))?;
    }
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn tolerances(a: &CrosscheckArgs, case: OutputCase, p: &AmplifierParams) -> Result<Tolerances, String> {
    let closed = if let Some(b) = &a.closed_band {
        let (e, h) = b
            .split_once(',')
            .ok_or_else(|| format!("--closed-band {b}: expected EXPECTED,HALF_WIDTH"))?;
        let expected = parse_value(e.trim()).map_err(|x| format!("--closed-band: {x}"))?;
        let half_width = parse_value(h.trim()).map_err(|x| format!("--closed-band: {x}"))?;
        ClosedTolerance::Band {
            expected,
            half_width,
        }
    } else if let Some(m) = a.closed_max {
        ClosedTolerance::Max { max: m }
    } else if *p == AmplifierParams::paper_defaults() {
        Tolerances::paper(case).closed
    } else {
        ClosedTolerance::Unchecked
    };
    Ok(Tolerances {
        engine: a.engine_tol,
        closed,
    })
}

fn cmd_crosscheck(a: &CrosscheckArgs, fmt: Format, out: &mut String) -> CmdResult {
    let case = OutputCase::from_number(a.case).ok_or_else(|| format!("--case {}: expected 1 or 2", a.case))?;
    let p = apply_overrides(a)?;
    let tol = tolerances(a, case, &p)?;
    let model = CircuitModel::from(a.model);
    if let Some(spec) = &a.sweep {
        let (axis, values) = spec
            .split_once('=')
            .ok_or_else(|| format!("--sweep {spec}: expected AXIS=v1,v2,..."))?;
        let grid = values
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| parse_value(t.trim()))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| format!("--sweep: {e}"))?;
        let reports =
            crosscheck::sweep(case, &p, axis.trim(), &grid, &tol, model).map_err(|e| e.to_string())?;
        match fmt {
            Format::Json => out.push_str(&json(&reports)),
            Format::Table => out.push_str(&sweep_table(axis.trim(), &reports)),
        }
        return Ok(if reports.iter().all(|r| r.verdict.pass) {
            EXIT_OK
        } else {
            EXIT_REJECTED
        });
    }
    let r: CrossCheckReport = crosscheck::run_case_model(case, &p, &tol, model).map_err(|e| e.to_string())?;
    match fmt {
        Format::Json => out.push_str(&json(&r)),
        Format::Table => out.push_str(&r.to_table()),
    }
    Ok(if r.verdict.pass { EXIT_OK } else { EXIT_REJECTED })
}

fn cmd_mason(file: &Path, from: &str, to: &str, limit: usize, fmt: Format, out: &mut String) -> CmdResult {
    let text = read(file)?;
    let g = FlowGraph::parse_edge_list(&text).map_err(|e| format!("{}:{e}", file.display()))?;
    let terms = sfg::mason_terms(&g, from, to, limit).map_err(|e| format!("{}: {e}", file.display()))?;
    let gain = terms.gain().map_err(|e| format!("{}: {e}", file.display()))?;
    match fmt {
        Format::Json => {
            #[derive(Serialize)]
            struct MasonOut<'a> {
                gain: f64,
                #[serde(flatten)]
                terms: &'a sfg::MasonTerms,
            }
            out.push_str(&json(&MasonOut { gain, terms: &terms }));
        }
        Format::Table => {
            let _ = writeln!(out, "forward paths {from} -> {to}:");
            for (p, d) in terms.forward_paths.iter().zip(&terms.cofactors) {
                let _ = writeln!(out, "  {:<40} P = {:>13.6e}  Δk = {:.6e}", p.nodes.join(" -> "), p.gain, d);
            }
            let _ = writeln!(out, "loops:");
            for l in &terms.loops {
                let _ = writeln!(out, "  {:<40} L = {:>13.6e}", l.nodes.join(" -> "), l.gain);
            }
            let _ = writeln!(out, "determinant: {:.6e}", terms.determinant);
            let _ = writeln!(out, "gain: {gain:.9e}");
        }
    }
    Ok(EXIT_OK)
}
