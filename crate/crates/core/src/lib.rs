//! A permissioned, stream-oriented ledger for sharing user data between
//! enterprises under user consent.
//!
//! The crate is layered bottom-up: canonical encoding and hashing,
//! identities and envelopes, the permission model, the consent state
//! machine, the ledger itself, node-side stream handling, encrypted
//! sharing, the enterprise repository, and finally the network simulator
//! and benchmark harness.

pub mod bench;
pub mod codec;
pub mod consent;
pub mod crypto;
pub mod enterprise;
pub mod hash;
pub mod ledger;
pub mod netsim;
pub mod node;
pub mod permissions;
pub mod sharing;
pub mod streams;

pub use crypto::{Address, NodeIdentity};
pub use hash::Hash256;
pub use ledger::{Block, Chain, ChainParams, ChainState, Transaction};
pub use node::{Consortium, Node};
