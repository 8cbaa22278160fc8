//! Hybrid-encrypted sharing over the `pubkeys`, `items` and `access`
//! streams.
//!
//! Each shared payload gets a fresh symmetric key. The ciphertext goes to
//! `items`; the key, wrapped once per recipient (the owner included), goes
//! to `access`. Access entries are public metadata: anyone who can read the
//! chain sees who shares with whom, but not what.

use std::collections::BTreeSet;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::Canonical;
use crate::consent::{ConsentDenied, ConsentError, ConsentEvent};
use crate::crypto::{AccessEntry, Address, EnvelopeError, EnvelopeItem, NodeIdentity, PublicIdentity};
use crate::ledger::{Chain, ChainState, Payload, Transaction};
use crate::node::Node;
use crate::permissions::{Denied, Permission};
use crate::streams::{
    ItemFilter, ItemRef, StreamError, StreamItem, ACCESS_STREAM, CONSENT_STREAM, ITEMS_STREAM, PUBKEYS_STREAM,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShareError {
    #[error("denied: {0}")]
    Denied(#[from] Denied),
    #[error("{0} has not announced a public key")]
    UnknownRecipientKey(Address),
    #[error(transparent)]
    ConsentDenied(#[from] ConsentDenied),
    #[error("no access entry for item {item_id} addressed to {reader}")]
    AccessDenied { item_id: String, reader: Address },
    #[error("envelope failed authenticated decryption")]
    CorruptEnvelope,
    #[error("no key announced for {0}")]
    KeyNotFound(Address),
    #[error("no item {0} in the items stream")]
    ItemNotFound(String),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Consent(#[from] ConsentError),
}

/// What a payload is about, when it concerns a user: the ledger refuses
/// access entries for a subject without active consent for the recipient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsentScope {
    pub user_id: String,
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareReceipt {
    pub item_id: String,
    /// Owner first, then the listed recipients without duplicates.
    pub recipients: Vec<Address>,
    pub transactions: Vec<Transaction>,
}

/// A decrypted item together with who published it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenedItem {
    pub item_id: String,
    pub publisher: Address,
    pub plaintext: Vec<u8>,
}

/// Publishes the node's public keys, keyed by its address.
pub fn announce_pubkey(node: &mut Node) -> Result<Transaction, StreamError> {
    let data = node.identity().public_identity().to_canonical_bytes();
    let key = node.address().to_string();
    node.publish(PUBKEYS_STREAM, Some(&key), data)
}

/// Queues a user-signed consent event on the `consent` stream, keyed by
/// the user id. The event is checked against confirmed state first.
pub fn record_consent(node: &mut Node, event: &ConsentEvent) -> Result<Transaction, ShareError> {
    let now = node.chain().tip().timestamp;
    node.chain().state().consent().check(event, now)?;
    let key = event.user_id.clone();
    Ok(node.publish(CONSENT_STREAM, Some(&key), event.to_canonical_bytes())?)
}

/// Latest confirmed announcement for `address`.
pub fn lookup_pubkey(state: &ChainState, address: &Address) -> Result<PublicIdentity, ShareError> {
    state
        .announced_key(address)
        .copied()
        .ok_or_else(|| ShareError::KeyNotFound(address.clone()))
}

/// Encrypts `plaintext` once and grants it to every recipient plus the
/// owner. All checks run before anything is queued.
pub fn share_data<R: RngCore + CryptoRng>(
    node: &mut Node,
    rng: &mut R,
    plaintext: &[u8],
    recipients: &[Address],
    consent: Option<&ConsentScope>,
) -> Result<ShareReceipt, ShareError> {
    let state = node.chain().state();
    if !state.permissions().check_permission(node.address(), Permission::Send) {
        return Err(Denied::Missing(Permission::Send).into());
    }
    let owner = node.address().clone();
    let mut seen = BTreeSet::from([owner.clone()]);
    let mut targets = vec![(owner.clone(), node.identity().wrap_key())];
    for r in recipients {
        if !seen.insert(r.clone()) {
            continue;
        }
        let key = state
            .announced_key(r)
            .ok_or_else(|| ShareError::UnknownRecipientKey(r.clone()))?;
        if let Some(scope) = consent {
            state.consent().gate_share(&scope.user_id, r, &scope.fields)?;
        }
        targets.push((r.clone(), key.wrap_key));
    }

    let (item, item_key) = EnvelopeItem::seal(rng, plaintext);
    let subject = consent.map(|c| c.user_id.clone());
    let entries = targets
        .iter()
        .map(|(addr, wrap_key)| {
            AccessEntry::wrap(rng, &item.item_id, addr, wrap_key, &item_key, subject.clone())
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut transactions = vec![node.publish(
        ITEMS_STREAM,
        Some(&item.item_id),
        item.to_canonical_bytes(),
    )?];
    for entry in &entries {
        transactions.push(node.publish(
            ACCESS_STREAM,
            Some(&item.item_id),
            entry.to_canonical_bytes(),
        )?);
    }
    Ok(ShareReceipt {
        item_id: item.item_id,
        recipients: targets.into_iter().map(|(a, _)| a).collect(),
        transactions,
    })
}

/// Unwraps and decrypts one item for `identity`.
pub fn decrypt_item(
    identity: &NodeIdentity,
    item: &EnvelopeItem,
    entry: &AccessEntry,
) -> Result<Vec<u8>, ShareError> {
    if entry.recipient != *identity.address() || entry.item_id != item.item_id {
        return Err(ShareError::AccessDenied {
            item_id: item.item_id.clone(),
            reader: identity.address().clone(),
        });
    }
    if item.item_id != EnvelopeItem::item_id_for(&item.ciphertext) {
        return Err(ShareError::CorruptEnvelope);
    }
    let key = entry.unwrap(identity).map_err(|_| ShareError::CorruptEnvelope)?;
    item.open(&key).map_err(|_| ShareError::CorruptEnvelope)
}

fn decode_items<T: Canonical>(items: Vec<StreamItem>) -> impl Iterator<Item = (StreamItem, T)> {
    items
        .into_iter()
        .filter(|i| i.confirmed)
        .filter_map(|i| T::from_canonical_bytes(&i.data).ok().map(|v| (i, v)))
}

/// Finds this node's access entry and the envelope for `item_id` among
/// confirmed items, then decrypts. Requires subscriptions to `items` and
/// `access`.
pub fn open_shared(node: &Node, item_id: &str) -> Result<OpenedItem, ShareError> {
    let filter = ItemFilter::key(item_id);
    let (stream_item, envelope) = decode_items::<EnvelopeItem>(node.get_items(ITEMS_STREAM, &filter)?)
        .last()
        .ok_or_else(|| ShareError::ItemNotFound(item_id.to_owned()))?;
    let entry = decode_items::<AccessEntry>(node.get_items(ACCESS_STREAM, &filter)?)
        .map(|(_, e)| e)
        .filter(|e| e.recipient == *node.address())
        .last()
        .ok_or_else(|| ShareError::AccessDenied {
            item_id: item_id.to_owned(),
            reader: node.address().clone(),
        })?;
    Ok(OpenedItem {
        item_id: item_id.to_owned(),
        publisher: stream_item.publisher,
        plaintext: decrypt_item(node.identity(), &envelope, &entry)?,
    })
}

pub fn read_shared(node: &Node, item_id: &str) -> Result<Vec<u8>, ShareError> {
    open_shared(node, item_id).map(|o| o.plaintext)
}

/// Every access entry on the chain, with its position and publisher.
/// Reads raw blocks, so it needs no subscription.
pub fn access_entries(chain: &Chain) -> Vec<(ItemRef, Address, AccessEntry)> {
    let mut out = Vec::new();
    for block in chain.blocks() {
        for (i, tx) in block.transactions.iter().enumerate() {
            if let Payload::StreamPublish { stream, data, .. } = &tx.payload {
                if stream == ACCESS_STREAM {
                    if let Ok(entry) = AccessEntry::from_canonical_bytes(data) {
                        let at = ItemRef {
                            height: block.height,
                            tx_index: i as u32,
                        };
                        out.push((at, tx.signer.clone(), entry));
                    }
                }
            }
        }
    }
    out
}
