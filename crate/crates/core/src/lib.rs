//! Small-signal analysis of negative-feedback amplifiers.
//!
//! The crate reads a SPICE-like netlist, expands transistor and op-amp
//! macros into linear primitives, and evaluates output impedances three
//! ways: closed-form two-port expressions, a modified nodal analysis solve,
//! and Mason's gain formula over a signal-flow graph. The [`crosscheck`]
//! module runs all of them side by side.
//!
//! ```
//! use feedback_lens::feedback::{exact_rx_case1, AmplifierParams};
//!
//! let p = AmplifierParams::paper_defaults();
//! let rx = exact_rx_case1(&p);
//! assert!((rx - 6.758e6).abs() < 1e3);
//! ```

pub mod cli;
pub mod crosscheck;
pub mod feedback;
pub mod linalg;
pub mod mna;
pub mod netlist;
pub mod sfg;
pub mod smallsignal;
pub mod units;

pub use netlist::{parse_netlist, validate, Circuit, Element, ElementKind, PortAnnotations};
pub use smallsignal::{linearize, LinearCircuit};
