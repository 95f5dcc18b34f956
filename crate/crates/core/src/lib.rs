//! Discrete-event simulation of sensor networks served by mobile sinks.
//!
//! Static sensors collect readings and forward them over per-region trees
//! to sinks that move through the field; the sinks aggregate, answer
//! queries, take over for failed peers and track hotspots over their own
//! channel. [`scenario::run_scenario`] runs a configured scenario on either
//! that design or a flat single-sink baseline.
//!
//! Runs are reproducible: all randomness comes from labeled streams of one
//! master seed, and iteration order never depends on hashing.

// Config and model validation writes `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod geometry;
pub mod metrics;
pub mod world;
pub mod radio;
pub mod sensor;
pub mod sink;
pub mod mobility;
pub mod localization;
pub mod scenario;
pub mod trace;
