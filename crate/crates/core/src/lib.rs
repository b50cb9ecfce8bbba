//! deadwood-core: detection and characterization of dead-weight Ethereum
//! accounts.
//!
//! The crate disassembles runtime bytecode, splits it into basic blocks, runs
//! a depth-tracking/symbolic stack machine over it, and combines the results
//! with account-state fields and transaction histories to classify accounts
//! into the removable categories it reports on. Call graphs and creation
//! graphs characterize how those accounts interact and how they came to be.

pub mod config;
pub mod detect;
pub mod graph;
pub mod ingest;
pub mod isa;
pub mod oracle;
pub mod report;
pub mod rpc;
pub mod symexec;
pub mod types;

pub use types::{Address, Hash32, U256};
