//! Core of a permissioned procurement and asset ledger.
//!
//! Everything here is transport-agnostic and deterministic: hashing and
//! canonical encoding, the block chain, proof-of-authority consensus, the
//! procurement and asset state machines, and an in-memory network simulator.

pub mod assets;
pub mod audit;
pub mod blocklog;
pub mod codec;
pub mod consensus;
pub mod crypto;
pub mod ledger;
pub mod payload;
pub mod p2p;
pub mod procurement;
pub mod replica;
pub mod state;
pub mod testkit;

pub use crypto::{mac_tag, sha3_512, Digest, MacSecret};
pub use ledger::{Block, Ledger, Transaction};
pub use payload::{Payload, Role, TxKind};
pub use state::{Rules, State, TxError};
