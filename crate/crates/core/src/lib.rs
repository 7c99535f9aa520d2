//! Disaggregated memory fabric for edge deployments.
//!
//! Memory modules expose byte-addressable NVM over a wireless mesh. Hosts
//! issue loads and stores against fabric addresses (module id + offset);
//! modules route them hop by hop using a sequence-numbered distance-vector
//! table, resolve concurrent writes by last-write-wins, and admit new or
//! moving members through a beacon-driven join handshake.
//!
//! The [`sim`] module binds everything into a deterministic discrete-event
//! simulator with a distance-based radio model and mobility traces.

pub mod address;
pub mod coherence;
pub mod memory_module;
pub mod radio;
pub mod routing;
pub mod sim;
pub mod tcp;
pub mod time;
pub mod wire;

pub use address::{FabricAddress, ModuleId};
pub use time::SimTime;
