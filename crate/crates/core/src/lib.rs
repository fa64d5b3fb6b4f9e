//! Deterministic, seedable simulator and library for decentralized federated
//! learning with asynchronous parameter sharing over a modeled wireless IoT
//! network.
//!
//! The crate is organized around six subsystems:
//!
//! - [`learning`] — models, losses, gradients, and the regularized projection
//!   operator that define each node's local objective and descent direction.
//! - [`protocol`] — the asynchronous parameter-sharing state machine: stamped
//!   mailboxes, bounded-staleness timestamps, aggregation, and local updates.
//! - [`wireless`] — node placement, block fading, SINR, threshold scheduling,
//!   max-min bandwidth allocation, and transmission/aggregation durations.
//! - [`analysis`] — numeric checks of the convergence bound, the admissible
//!   learning-rate window, consensus metrics, and the normalized duality gap.
//! - [`engine`] — the discrete-event simulation loop on a virtual slot clock,
//!   plus baseline algorithms for comparison.
//! - [`config`] / [`experiment`] — config ingestion, experiment suites, and
//!   plot-data export for the CLI.

pub mod analysis;
pub mod config;
pub mod engine;
pub mod experiment;
pub mod learning;
pub mod protocol;
pub mod trace;
pub mod wireless;

pub use learning::params::ParameterVector;
pub use learning::{LocalTask, SmoothnessConstants};
pub use protocol::{NodeId, NodeState, StampedParameter};
pub use trace::TraceRecord;
