//! Anonymous, fair edge offloading.

pub mod blind;
pub mod config;
pub mod conformance;
pub mod harness;
pub mod ideal;
pub mod ledger;
pub mod node;
pub mod parties;
pub mod puzzle;
pub mod sim;
pub mod stats;
pub mod symmetric;
pub mod wire;
pub mod workload;

pub use puzzle::{Scheme, SecurityLevel};
