//! Closed-form output-impedance expressions.
//!
//! Each function evaluates its expression as written, including the
//! `β + 1` versus `β` asymmetry between the two output cases. How far an
//! approximation sits from the true circuit is measured elsewhere, against
//! the nodal solver.

use serde::Serialize;

use super::params::AmplifierParams;

/// Default dominance ratio for "much greater than" predicates.
pub const DOMINANCE_RATIO: f64 = 100.0;

/// Which terminal of the output transistor carries the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputCase {
    /// Output at the collector, feedback resistor in the emitter.
    Collector,
    /// Output at the emitter, feedback resistor in the collector.
    Emitter,
}

impl OutputCase {
    pub fn number(self) -> u8 {
        match self {
            OutputCase::Collector => 1,
            OutputCase::Emitter => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(OutputCase::Collector),
            2 => Some(OutputCase::Emitter),
            _ => None,
        }
    }
}

fn re_case1(p: &AmplifierParams) -> f64 {
    (p.r_out + p.r_pi) / (p.beta() + 1.0)
}

fn re_case2(p: &AmplifierParams) -> f64 {
    (p.r_out + p.r_pi) / p.beta()
}

/// Loop factor for the collector-output stage.
pub fn one_plus_af_case1(p: &AmplifierParams) -> f64 {
    let re = re_case1(p);
    (p.r1 * (p.k + 1.0) + re) / (p.r1 + re)
}

/// Loop factor for the emitter-output stage.
pub fn one_plus_af_case2(p: &AmplifierParams) -> f64 {
    1.0 + p.k * p.r1 / (p.r2 + re_case2(p))
}

/// Common-emitter output resistance with emitter degeneration `r_e_deg`
/// and base source resistance `r_s`.
pub fn degeneration_rx(r_o: f64, g_m: f64, beta: f64, r_e_deg: f64, r_s: f64) -> f64 {
    if r_e_deg.is_infinite() {
        return r_o * beta;
    }
    r_o * (1.0 + g_m * r_e_deg + g_m * r_s / beta) / (1.0 + g_m * r_e_deg / beta + g_m * r_s / beta)
}

/// Output current per volt of input, ignoring `r_o`.
pub fn branch_current_openloop(p: &AmplifierParams) -> f64 {
    p.k / (p.r1 + re_case1(p))
}

/// Output-branch resistance with feedback.
pub fn branch_resistance_feedback(p: &AmplifierParams, case: OutputCase) -> f64 {
    match case {
        OutputCase::Collector => (p.r1 + re_case1(p)) * one_plus_af_case1(p),
        OutputCase::Emitter => (p.r2 + re_case2(p)) * one_plus_af_case2(p),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Case1ClosedForm {
    /// The final rearranged approximation.
    pub r_x: f64,
    /// Degeneration formula with `R_E → R_bf` and `R_S → r_out`.
    pub r_x_substituted: f64,
    /// Large-loop-gain simplification.
    pub r_x_simplified: f64,
    /// Whether `R1(β+1)(K+1) ≥ ratio·(r_out(β+1) + r_π)` holds.
    pub simplified_valid: bool,
    pub dominance_ratio: f64,
}

/// True when the simplification precondition holds at `ratio`.
pub fn simplification_predicate(p: &AmplifierParams, ratio: f64) -> bool {
    let b1 = p.beta() + 1.0;
    p.r1 * b1 * (p.k + 1.0) >= ratio * (p.r_out * b1 + p.r_pi)
}

pub fn closed_form_rx_case1(p: &AmplifierParams) -> Case1ClosedForm {
    closed_form_rx_case1_with_ratio(p, DOMINANCE_RATIO)
}

pub fn closed_form_rx_case1_with_ratio(p: &AmplifierParams, ratio: f64) -> Case1ClosedForm {
    let beta = p.beta();
    let b1 = beta + 1.0;
    let loop_term = p.r1 * (p.k + 1.0) * b1;
    let r_x = p.r_o * (loop_term + 2.0 * p.r_out + 2.0 * p.r_pi)
        / ((loop_term + p.r_out * b1 + p.r_pi * b1) / beta);
    let r_bf = branch_resistance_feedback(p, OutputCase::Collector);
    let gk = p.r1 * p.g_m * (p.k + 1.0);
    Case1ClosedForm {
        r_x,
        r_x_substituted: degeneration_rx(p.r_o, p.g_m, beta, r_bf, p.r_out),
        r_x_simplified: p.r_o * (1.0 + gk) / (1.0 + gk / beta),
        simplified_valid: simplification_predicate(p, ratio),
        dominance_ratio: ratio,
    }
}

/// Exact collector-output resistance of the hybrid-π stage (`R_in = ∞`).
pub fn exact_rx_case1(p: &AmplifierParams) -> f64 {
    let rt = p.r_out + p.r_pi;
    let b1 = p.beta() + 1.0;
    (p.r_o * (1.0 + p.r1 * b1 * (p.k + 1.0) / rt) + p.r1) / (1.0 + p.r1 * (p.k + 1.0) / rt)
}

pub fn closed_form_rx_case2(p: &AmplifierParams) -> f64 {
    let beta = p.beta();
    (p.r1 * p.k * beta + p.r_out + p.r_pi) / beta
}

/// Emitter-output resistance obtained with the base current treated as
/// if it did not return through the emitter (`g_m + 1/r_π ≈ g_m`).
pub fn exact_rx_case2(p: &AmplifierParams) -> f64 {
    let rt = p.r_out + p.r_pi;
    let beta = p.beta();
    (p.r_o * p.r1 * p.k * beta + p.r_o * rt + p.r1 * rt) / (p.r_o * beta + rt)
}

/// Emitter-output resistance of the full hybrid-π stage (`R_in = ∞`).
pub fn full_rx_case2(p: &AmplifierParams) -> f64 {
    let rt = p.r_out + p.r_pi;
    let beta = p.beta();
    (p.k * p.r1 * beta * p.r_o + (p.r1 + p.r_o) * rt)
        / (p.r_o * (beta + 1.0) + rt + p.r1 * (1.0 - p.k))
}

/// `R_X ∥ R2`; an infinite side drops out.
pub fn output_resistance(r_x: f64, r2: f64) -> f64 {
    match (r_x.is_infinite(), r2.is_infinite()) {
        (true, true) => f64::INFINITY,
        (true, false) => r2,
        (false, true) => r_x,
        (false, false) => r_x * r2 / (r_x + r2),
    }
}
