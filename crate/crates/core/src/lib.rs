//! Deterministic discrete-event simulator for wireless sensor networks and
//! the OPSER hybrid opportunistic/unicast routing protocol, with the
//! OppBcast and greedy-unicast baselines.
//!
//! The usual entry point is [`sim::run_scenario`] with a [`Scenario`]
//! loaded from TOML. Runs are fully determined by the scenario and seed.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baseline;
pub mod energy;
pub mod engine;
pub mod error;
pub mod mac;
pub mod metrics;
pub mod protocol;
pub mod radio;
pub mod scenario;
pub mod sim;
pub mod trace;
pub mod validate;

pub use engine::SimTime;
pub use error::{Error, Result};
pub use metrics::MetricsRecord;
pub use protocol::{NodeId, ProtocolKind};
pub use scenario::Scenario;
pub use sim::{run_scenario, RunOptions, RunOutput, Simulation};
pub use trace::TraceRecord;
pub use validate::{validate_trace, ValidateOptions, ValidationReport};
