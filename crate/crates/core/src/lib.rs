//! Discrete-time simulator of an AI-orchestrated, disaggregated radio
//! access network: topology, channel, traffic, model catalog, placement,
//! per-cell schedulers and the slot engine that ties them together.

pub mod catalog;
pub mod channel;
pub mod config;
pub mod metrics;
pub mod orchestrator;
pub mod report;
pub mod rng;
pub mod sched;
pub mod sim;
pub mod spec;
pub mod sweep;
pub mod topology;
pub mod traffic;
