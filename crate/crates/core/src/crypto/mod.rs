mod envelope;
mod identity;

pub use envelope::{AccessEntry, EnvelopeError, EnvelopeItem, ItemKey, SYM_SCHEME, WRAP_SCHEME};
pub use identity::{
    Address, AddressError, NodeIdentity, PublicIdentity, PublicKey, Signature, WrapKey,
    ADDRESS_VERSION,
};
