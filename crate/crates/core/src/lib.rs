//! Trusted data transfer between independent permissioned ledgers.
//!
//! Relays exchange network-neutral queries; source peers answer with
//! results sealed for the requesting client and signed attestations; the
//! destination ledger validates the proof against its recorded
//! verification policy before accepting the data.

pub mod codec;
pub mod crypto;
pub mod ledger;
pub mod system;
pub mod wire;
pub mod relay;
pub mod client;
pub mod scenario;
