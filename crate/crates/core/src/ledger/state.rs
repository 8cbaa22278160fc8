//! Validated cumulative state at the best height.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::{Canonical, Encoder};
use crate::consent::{ConsentError, ConsentEvent, ConsentTable};
use crate::crypto::{AccessEntry, Address, EnvelopeItem, PublicIdentity};
use crate::hash::Hash256;
use crate::permissions::{
    authorize_tx, Denied, GrantDirection, GrantScope, Permission, PermissionChange, PermissionSet,
    PermissionStateMap,
};
use crate::streams::{Stream, ACCESS_STREAM, CONSENT_STREAM, ITEMS_STREAM, PUBKEYS_STREAM};

use super::block::{Payload, Transaction, TxIntegrityError};
use super::params::ChainParams;

const STATE_DOMAIN: &[u8] = b"consentchain/state/v1";

/// Why a transaction cannot be applied to a state.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error(transparent)]
    Integrity(#[from] TxIntegrityError),
    #[error("nonce {got} does not exceed the signer's last nonce {last}")]
    StaleNonce { last: u64, got: u64 },
    #[error("denied: {0}")]
    Denied(#[from] Denied),
    #[error("stream {0:?} already exists")]
    DuplicateStream(String),
    #[error("stream name must be non-empty")]
    EmptyStreamName,
    #[error("malformed item for stream {stream:?}: {reason}")]
    MalformedItem { stream: String, reason: String },
    #[error("consent event rejected: {0}")]
    Consent(#[from] ConsentError),
    #[error("user {subject} has no active consent covering {recipient}")]
    ConsentRequired { subject: String, recipient: Address },
}

fn malformed(stream: &str, reason: impl ToString) -> TxError {
    TxError::MalformedItem {
        stream: stream.to_owned(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainState {
    permissions: PermissionStateMap,
    streams: BTreeMap<String, Stream>,
    consent: ConsentTable,
    nonces: BTreeMap<Address, u64>,
    announced: BTreeMap<Address, PublicIdentity>,
    best_height: u64,
}

impl ChainState {
    /// State right after genesis: the founder holds every flag and the root
    /// stream exists.
    pub fn genesis(params: &ChainParams, founder: &Address, timestamp: u64) -> Self {
        let mut permissions = PermissionStateMap::new(
            params.default_permissions(),
            params.anyone_can_receive_empty,
        );
        permissions.set(founder.clone(), PermissionSet::ALL);
        let mut streams = BTreeMap::new();
        streams.insert(
            params.root_stream_name.clone(),
            Stream::new(
                params.root_stream_name.clone(),
                founder.clone(),
                params.root_stream_open,
                timestamp,
            ),
        );
        ChainState {
            permissions,
            streams,
            consent: ConsentTable::new(),
            nonces: BTreeMap::new(),
            announced: BTreeMap::new(),
            best_height: 0,
        }
    }

    pub fn permissions(&self) -> &PermissionStateMap {
        &self.permissions
    }

    pub fn stream(&self, name: &str) -> Option<&Stream> {
        self.streams.get(name)
    }

    pub fn streams(&self) -> impl Iterator<Item = &Stream> {
        self.streams.values()
    }

    pub fn consent(&self) -> &ConsentTable {
        &self.consent
    }

    pub fn best_height(&self) -> u64 {
        self.best_height
    }

    pub fn last_nonce(&self, signer: &Address) -> u64 {
        self.nonces.get(signer).copied().unwrap_or(0)
    }

    /// Latest key set announced in the `pubkeys` stream.
    pub fn announced_key(&self, address: &Address) -> Option<&PublicIdentity> {
        self.announced.get(address)
    }

    /// Miner whose turn it is at `height`: the explicit mine holders in
    /// address order, rotated by height. `None` when nobody may mine, or
    /// when `anyone-can-mine` removes the rotation altogether.
    pub fn expected_miner(&self, height: u64) -> Option<&Address> {
        if self.permissions.defaults().contains(Permission::Mine) {
            return None;
        }
        let miners: Vec<&Address> = self.permissions.holders(Permission::Mine).collect();
        if miners.is_empty() {
            return None;
        }
        Some(miners[(height % miners.len() as u64) as usize])
    }

    /// Applies one transaction in place. On error the state is unchanged.
    pub fn apply_tx(&mut self, tx: &Transaction, timestamp: u64) -> Result<(), TxError> {
        tx.verify()?;
        let last = self.last_nonce(&tx.signer);
        if tx.nonce <= last {
            return Err(TxError::StaleNonce { last, got: tx.nonce });
        }
        authorize_tx(self, tx)?;
        match &tx.payload {
            Payload::Grant(grant) | Payload::Revoke(grant) => {
                let direction = if matches!(tx.payload, Payload::Grant(_)) {
                    GrantDirection::Grant
                } else {
                    GrantDirection::Revoke
                };
                match &grant.scope {
                    GrantScope::Flags(flags) => self.permissions.apply_change(
                        &tx.signer,
                        &grant.target,
                        PermissionChange::new(direction, *flags),
                    )?,
                    GrantScope::StreamWrite(name) => {
                        let stream = self
                            .streams
                            .get_mut(name)
                            .ok_or_else(|| Denied::NoSuchStream(name.clone()))?;
                        match direction {
                            GrantDirection::Grant => stream.writers.insert(grant.target.clone()),
                            GrantDirection::Revoke => stream.writers.remove(&grant.target),
                        };
                    }
                }
            }
            Payload::StreamCreate { name, open } => {
                if name.trim().is_empty() {
                    return Err(TxError::EmptyStreamName);
                }
                if self.streams.contains_key(name) {
                    return Err(TxError::DuplicateStream(name.clone()));
                }
                self.streams.insert(
                    name.clone(),
                    Stream::new(name.clone(), tx.signer.clone(), *open, timestamp),
                );
            }
            Payload::StreamPublish { stream, key, data } => {
                self.check_well_known(tx, stream, key.as_deref(), data, timestamp)?;
                let entry = self.streams.get_mut(stream).expect("authorized above");
                entry.item_count += 1;
                entry.publishers.insert(tx.signer.clone());
            }
        }
        self.nonces.insert(tx.signer.clone(), tx.nonce);
        Ok(())
    }

    /// Content rules for the streams that back key distribution, sharing
    /// and consent. Side effects (key directory, consent table) happen only
    /// once every check has passed.
    fn check_well_known(
        &mut self,
        tx: &Transaction,
        stream: &str,
        key: Option<&str>,
        data: &[u8],
        timestamp: u64,
    ) -> Result<(), TxError> {
        match stream {
            PUBKEYS_STREAM => {
                let identity =
                    PublicIdentity::from_canonical_bytes(data).map_err(|e| malformed(stream, e))?;
                if identity.address() != tx.signer {
                    return Err(malformed(stream, "announced key does not belong to the publisher"));
                }
                if key != Some(tx.signer.as_str()) {
                    return Err(malformed(stream, "item key must be the publisher address"));
                }
                self.announced.insert(tx.signer.clone(), identity);
            }
            ITEMS_STREAM => {
                let item = EnvelopeItem::from_canonical_bytes(data).map_err(|e| malformed(stream, e))?;
                if item.item_id != EnvelopeItem::item_id_for(&item.ciphertext) {
                    return Err(malformed(stream, "item id does not match ciphertext"));
                }
                if key != Some(item.item_id.as_str()) {
                    return Err(malformed(stream, "item key must be the item id"));
                }
            }
            ACCESS_STREAM => {
                let entry = AccessEntry::from_canonical_bytes(data).map_err(|e| malformed(stream, e))?;
                if key != Some(entry.item_id.as_str()) {
                    return Err(malformed(stream, "item key must be the item id"));
                }
                if let Some(subject) = &entry.subject {
                    if entry.recipient != tx.signer
                        && self.consent.active_fields(subject, &entry.recipient).is_none()
                    {
                        return Err(TxError::ConsentRequired {
                            subject: subject.clone(),
                            recipient: entry.recipient,
                        });
                    }
                }
            }
            CONSENT_STREAM => {
                let event = ConsentEvent::from_canonical_bytes(data).map_err(|e| malformed(stream, e))?;
                self.consent.apply(event, timestamp)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Applies a block's transactions atomically, returning the successor
    /// state or the index of the first offending transaction.
    pub fn apply_block(
        &self,
        height: u64,
        timestamp: u64,
        txs: &[Transaction],
    ) -> Result<ChainState, (usize, TxError)> {
        let mut next = self.clone();
        for (i, tx) in txs.iter().enumerate() {
            next.apply_tx(tx, timestamp).map_err(|e| (i, e))?;
        }
        next.best_height = height;
        Ok(next)
    }

    /// Canonical encoding of every entry, sorted by key.
    pub fn encode_state(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(STATE_DOMAIN).u64(self.best_height);
        enc.u8(self.permissions.defaults().bits())
            .bool(self.permissions.can_receive_empty_by_default());
        enc.u32(self.permissions.len() as u32);
        for (address, flags) in self.permissions.entries() {
            address.encode(&mut enc);
            enc.u8(flags.bits());
        }
        enc.u32(self.streams.len() as u32);
        for s in self.streams.values() {
            enc.str(&s.name);
            s.creator.encode(&mut enc);
            enc.bool(s.open).u64(s.created_at).u64(s.item_count);
            enc.u32(s.publishers.len() as u32);
            for p in &s.publishers {
                p.encode(&mut enc);
            }
            enc.u32(s.writers.len() as u32);
            for w in &s.writers {
                w.encode(&mut enc);
            }
        }
        self.consent.encode_state(&mut enc);
        enc.u32(self.nonces.len() as u32);
        for (address, nonce) in &self.nonces {
            address.encode(&mut enc);
            enc.u64(*nonce);
        }
        enc.u32(self.announced.len() as u32);
        for (address, identity) in &self.announced {
            address.encode(&mut enc);
            identity.encode(&mut enc);
        }
        enc.into_bytes()
    }

    pub fn state_hash(&self) -> Hash256 {
        Hash256::digest(&self.encode_state())
    }

    pub fn encoded_len(&self) -> usize {
        self.encode_state().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::NodeIdentity;
    use crate::permissions::GrantPayload;

    fn setup() -> (NodeIdentity, ChainState) {
        let founder = NodeIdentity::generate(Some(b"founder"));
        let state = ChainState::genesis(&ChainParams::default(), founder.address(), 0);
        (founder, state)
    }

    #[test]
    fn genesis_state_has_founder_and_root() {
        let (founder, state) = setup();
        assert_eq!(state.permissions().explicit(founder.address()), PermissionSet::ALL);
        assert_eq!(state.permissions().len(), 1);
        let root = state.stream("root").unwrap();
        assert!(root.open);
        assert_eq!(root.item_count, 0);
        assert_eq!(state.streams().count(), 1);
    }

    #[test]
    fn nonces_must_increase() {
        let (founder, mut state) = setup();
        let other = NodeIdentity::generate(Some(b"n2")).address().clone();
        let grant = |n| {
            Transaction::new_signed(
                &founder,
                n,
                Payload::Grant(GrantPayload::flags(other.clone(), [Permission::Connect])),
            )
        };
        state.apply_tx(&grant(1), 0).unwrap();
        assert_eq!(
            state.apply_tx(&grant(1), 0),
            Err(TxError::StaleNonce { last: 1, got: 1 })
        );
        state.apply_tx(&grant(5), 0).unwrap();
    }

    #[test]
    fn failed_block_leaves_state_untouched() {
        let (founder, state) = setup();
        let txs = vec![
            Transaction::new_signed(
                &founder,
                1,
                Payload::StreamCreate {
                    name: "a".into(),
                    open: false,
                },
            ),
            Transaction::new_signed(
                &founder,
                2,
                Payload::StreamCreate {
                    name: "a".into(),
                    open: false,
                },
            ),
        ];
        let before = state.state_hash();
        let err = state.apply_block(1, 0, &txs).unwrap_err();
        assert_eq!(err, (1, TxError::DuplicateStream("a".into())));
        assert_eq!(state.state_hash(), before);
    }

    #[test]
    fn pubkey_announcement_must_match_publisher() {
        let (founder, mut state) = setup();
        let create = Transaction::new_signed(
            &founder,
            1,
            Payload::StreamCreate {
                name: PUBKEYS_STREAM.into(),
                open: true,
            },
        );
        state.apply_tx(&create, 0).unwrap();
        let stranger = NodeIdentity::generate(Some(b"stranger"));
        let bad = Transaction::new_signed(
            &founder,
            2,
            Payload::StreamPublish {
                stream: PUBKEYS_STREAM.into(),
                key: Some(founder.address().to_string()),
                data: stranger.public_identity().to_canonical_bytes(),
            },
        );
        assert!(matches!(state.apply_tx(&bad, 0), Err(TxError::MalformedItem { .. })));
        let good = Transaction::new_signed(
            &founder,
            3,
            Payload::StreamPublish {
                stream: PUBKEYS_STREAM.into(),
                key: Some(founder.address().to_string()),
                data: founder.public_identity().to_canonical_bytes(),
            },
        );
        state.apply_tx(&good, 0).unwrap();
        assert_eq!(
            state.announced_key(founder.address()),
            Some(&founder.public_identity())
        );
    }

    #[test]
    fn state_hash_ignores_insertion_order() {
        let (founder, base) = setup();
        let a = NodeIdentity::generate(Some(b"a")).address().clone();
        let b = NodeIdentity::generate(Some(b"b")).address().clone();
        let mut s1 = base.clone();
        let mut s2 = base;
        // Same final content, reached through different nonce sequences
        // would differ; so set the maps directly.
        s1.permissions.set(a.clone(), PermissionSet::from([Permission::Send]));
        s1.permissions.set(b.clone(), PermissionSet::from([Permission::Mine]));
        s2.permissions.set(b, PermissionSet::from([Permission::Mine]));
        s2.permissions.set(a, PermissionSet::from([Permission::Send]));
        assert_eq!(s1.state_hash(), s2.state_hash());
        let _ = founder;
    }
}
