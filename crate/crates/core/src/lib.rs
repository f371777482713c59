//! Exact analysis of binary-decision voting games in which agents'
//! preferences depend on an unobserved world state.
//!
//! * [`model`] — instances, agent types and the informed-majority decision.
//! * [`exactprob`] — exact and Monte Carlo win probabilities, fidelity and
//!   expected utilities.
//! * [`analysis`] — excess expected vote share, concentration bounds,
//!   high-fidelity classification and sincere voting.
//! * [`strategize`] — the high-fidelity strategy construction and ε-strong
//!   equilibrium checks.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod exactprob;
pub mod model;
pub mod strategize;

pub use exactprob::{analyze, AnalysisReport, ExactError};
pub use model::{
    validate_instance, AgentTag, AgentType, Alternative, Family, Game, Instance, ModelError,
    Profile, RawInstance, Setting, SignalChannel, StatePrior, Strategy, UtilityFn,
};
