//! Feedback topology, loading, and closed-form output impedances.

mod formulas;
mod loading;
mod params;
mod topology;

pub use formulas::*;
pub use loading::{loading_effect, FactorKind, LoadingModel};
pub use params::{AmplifierParams, ParamError, PARAM_KEYS};
pub use topology::{
    classify, classify_topology, Classification, ClassifyError, Connection, FeedbackPorts,
    FeedbackTopology, Validity,
};

use serde::Serialize;
use thiserror::Error;

use crate::mna::MnaError;
use crate::netlist::{Circuit, ElementKind, NodePair, GROUND};
use crate::smallsignal::{linearize, LinearizeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Mna(#[from] MnaError),
    #[error("topology is irrelevant; no loading model")]
    Irrelevant,
}

/// Classification and loading of an annotated circuit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackReport {
    pub classification: Classification,
    pub loading: Option<LoadingModel>,
}

pub fn analyze_circuit(c: &Circuit) -> Result<FeedbackReport, FeedbackError> {
    let classification = classify(c)?;
    let Some(ports) = &classification.ports else {
        return Ok(FeedbackReport {
            classification,
            loading: None,
        });
    };
    let lc = linearize(c)?;
    let fb = lc.restricted_to(c.annotations.feedback_elements.iter().map(String::as_str));
    let loading = loading_effect(&fb, &classification.topology, ports)?;
    Ok(FeedbackReport {
        classification,
        loading: Some(loading),
    })
}

/// Closed-form view of a series-at-output stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeedbackAnalysis {
    pub topology: FeedbackTopology,
    pub loading: LoadingModel,
    pub case: OutputCase,
    pub one_plus_af: f64,
    pub r_bf: f64,
    pub r_x: f64,
    pub r_out: f64,
}

/// Combines a loading model with the closed forms for `case`.
pub fn feedback_analysis(
    topology: FeedbackTopology,
    loading: LoadingModel,
    case: OutputCase,
    p: &AmplifierParams,
) -> FeedbackAnalysis {
    let (one_plus_af, r_x) = match case {
        OutputCase::Collector => (one_plus_af_case1(p), closed_form_rx_case1(p).r_x),
        OutputCase::Emitter => (one_plus_af_case2(p), closed_form_rx_case2(p)),
    };
    FeedbackAnalysis {
        topology,
        loading,
        case,
        one_plus_af,
        r_bf: branch_resistance_feedback(p, case),
        r_x,
        r_out: output_resistance(r_x, p.r2),
    }
}

/// A circuit recognized as one of the two op-amp driven output stages,
/// measured at `port`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseMatch {
    pub case: OutputCase,
    pub params: AmplifierParams,
    /// Whether a load resistor `R2` sits across the port.
    pub loaded: bool,
}

impl CaseMatch {
    /// Closed-form impedance at the matched port.
    pub fn closed_form(&self) -> f64 {
        let r_x = match self.case {
            OutputCase::Collector => closed_form_rx_case1(&self.params).r_x,
            OutputCase::Emitter => closed_form_rx_case2(&self.params),
        };
        if self.loaded {
            output_resistance(r_x, self.params.r2)
        } else {
            r_x
        }
    }

    /// The exact expression at the matched port.
    pub fn exact_formula(&self) -> f64 {
        let r_x = match self.case {
            OutputCase::Collector => exact_rx_case1(&self.params),
            OutputCase::Emitter => exact_rx_case2(&self.params),
        };
        if self.loaded {
            output_resistance(r_x, self.params.r2)
        } else {
            r_x
        }
    }
}

fn grounded_resistor<'a>(c: &'a Circuit, node: &str, skip: Option<&str>) -> Option<(&'a str, f64)> {
    c.elements.iter().find_map(|e| match &e.kind {
        ElementKind::Resistor { a, b, ohms }
            if Some(e.name.as_str()) != skip
                && ((a == node && b == GROUND) || (b == node && a == GROUND)) =>
        {
            Some((e.name.as_str(), *ohms))
        }
        _ => None,
    })
}

/// Recognizes an op-amp driving the base of a transistor whose collector
/// (first case) or emitter (second case) is `port.pos`, with the sensing
/// resistor from the opposite terminal to ground.
pub fn match_case(c: &Circuit, port: &NodePair) -> Option<CaseMatch> {
    if port.neg != GROUND {
        return None;
    }
    let mut bjts = c.elements.iter().filter_map(|e| match &e.kind {
        ElementKind::BjtPi {
            collector,
            base,
            emitter,
            gm,
            rpi,
            ro,
        } => Some((collector, base, emitter, *gm, *rpi, *ro)),
        _ => None,
    });
    let mut opamps = c.elements.iter().filter_map(|e| match &e.kind {
        ElementKind::OpAmp {
            plus,
            minus,
            out,
            gain,
            rout,
            rin,
        } => Some((plus, minus, out, *gain, *rout, *rin)),
        _ => None,
    });
    let (col, base, emit, gm, rpi, ro) = bjts.next()?;
    let (plus, minus, out, k, rout, rin) = opamps.next()?;
    if bjts.next().is_some() || opamps.next().is_some() || out != base || !ro.is_finite() {
        return None;
    }
    let case = if *col == port.pos && minus == emit {
        OutputCase::Collector
    } else if *emit == port.pos && plus == col {
        OutputCase::Emitter
    } else {
        return None;
    };
    let sense = match case {
        OutputCase::Collector => emit,
        OutputCase::Emitter => col,
    };
    let (r1_name, r1) = grounded_resistor(c, sense, None)?;
    let load = grounded_resistor(c, &port.pos, Some(r1_name));
    let mut params = AmplifierParams {
        k,
        r_out: rout,
        r1,
        g_m: gm,
        r_pi: rpi,
        r_o: ro,
        r_in: rin.filter(|r| r.is_finite()),
        ..AmplifierParams::paper_defaults()
    };
    if let Some((_, r2)) = load {
        params.r2 = r2;
    }
    Some(CaseMatch {
        case,
        params,
        loaded: load.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    const FIG4: &str = "\
U1 in e b K=1000 rout=500k
Q1 c b e gm=40m rpi=2.5k ro=100k
R1 e 0 1k
R2 c 0 10k
.input in 0
.output c 0
.feedback R1
";

    #[test]
    fn fig4_report() {
        let c = parse_netlist(FIG4).unwrap();
        let r = analyze_circuit(&c).unwrap();
        let m = r.loading.unwrap();
        assert!((m.r_if.ohms() - 1e3).abs() < 1e-9);
        assert!((m.f - 1e3).abs() < 1e-9);
        let cm = match_case(&c, &NodePair::to_ground("c")).unwrap();
        assert_eq!(cm.case, OutputCase::Collector);
        assert!(cm.loaded);
        assert_eq!(cm.params.beta(), 100.0);
        let a = feedback_analysis(r.classification.topology, m, cm.case, &cm.params);
        assert!(a.r_out <= a.r_x.min(cm.params.r2));
        assert!((a.r_out - a.r_x * 10e3 / (a.r_x + 10e3)).abs() < 1e-9);
    }

    #[test]
    fn no_match_without_opamp() {
        let c = parse_netlist("Q1 c b e gm=40m rpi=2.5k ro=100k\nR1 e 0 1k\n").unwrap();
        assert!(match_case(&c, &NodePair::to_ground("c")).is_none());
    }
}
