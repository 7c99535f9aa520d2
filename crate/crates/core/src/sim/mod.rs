//! Deterministic discrete-event simulation of a fabric deployment.

pub mod engine;
pub mod metrics;
pub mod scenario;
pub mod stats;
pub mod sweep;

pub use engine::{run, Simulation};
pub use metrics::{MetricsRecord, RequestStatus, Summary};
pub use scenario::{Scenario, ScenarioError, Transport};
