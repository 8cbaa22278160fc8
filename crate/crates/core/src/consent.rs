//! Per-user, field-level consent.
//!
//! Each `(user, grantee)` pair moves through a two-state machine:
//!
//! ```text
//!   absent ──GRANT──▶ ACTIVE ──WITHDRAW──▶ WITHDRAWN
//!                      │  ▲                   │
//!                      └──┘ ALTER             └──GRANT──▶ ACTIVE
//! ```
//!
//! Events are signed by the user's own key and stored as items of the
//! `consent` stream, so the table is a pure fold over that stream. Withdrawal
//! stops new access grants; it cannot erase ciphertexts already on chain.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::crypto::{Address, AddressError, NodeIdentity, PublicKey, Signature};

pub const WILDCARD: &str = "*";
const EVENT_DOMAIN: &[u8] = b"consentchain/consent-event/v1";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Grantee {
    Any,
    Address(Address),
}

impl Grantee {
    pub fn matches(&self, address: &Address) -> bool {
        match self {
            Grantee::Any => true,
            Grantee::Address(a) => a == address,
        }
    }
}

impl fmt::Display for Grantee {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grantee::Any => f.write_str(WILDCARD),
            Grantee::Address(a) => a.fmt(f),
        }
    }
}

impl FromStr for Grantee {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == WILDCARD {
            Ok(Grantee::Any)
        } else {
            Address::parse(s).map(Grantee::Address)
        }
    }
}

impl From<Grantee> for String {
    fn from(g: Grantee) -> String {
        g.to_string()
    }
}

impl TryFrom<String> for Grantee {
    type Error = AddressError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl Canonical for Grantee {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Grantee::Any => {
                enc.u8(0);
            }
            Grantee::Address(a) => {
                enc.u8(1);
                a.encode(enc);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            0 => Ok(Grantee::Any),
            1 => Ok(Grantee::Address(Address::decode(dec)?)),
            tag => Err(DecodeError::InvalidTag {
                what: "grantee",
                tag,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConsentState {
    Active,
    Withdrawn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConsentKind {
    Grant,
    Alter,
    Withdraw,
}

impl ConsentKind {
    pub const ALL: [ConsentKind; 3] = [ConsentKind::Grant, ConsentKind::Alter, ConsentKind::Withdraw];

    fn tag(self) -> u8 {
        match self {
            ConsentKind::Grant => 1,
            ConsentKind::Alter => 2,
            ConsentKind::Withdraw => 3,
        }
    }
}

impl FromStr for ConsentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "grant" => Ok(ConsentKind::Grant),
            "alter" => Ok(ConsentKind::Alter),
            "withdraw" => Ok(ConsentKind::Withdraw),
            _ => Err(format!("unknown consent event {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsentError {
    #[error("{kind:?} is not allowed from state {current:?}")]
    InvalidTransition {
        kind: ConsentKind,
        current: Option<ConsentState>,
    },
    #[error("event is not signed by the user's own key")]
    BadSignature,
    #[error("event expects record version {got}, current version is {expected}")]
    StaleVersion { expected: u64, got: u64 },
    #[error("{0:?} needs at least one field")]
    EmptyFields(ConsentKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("user {user_id} has not consented to share {missing:?} with {grantee}")]
pub struct ConsentDenied {
    pub user_id: String,
    pub grantee: Address,
    pub missing: BTreeSet<String>,
}

/// A user-signed request to change one consent record.
///
/// `prior_version` pins the record version the user saw when signing, so a
/// captured event cannot be replayed after later transitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsentEvent {
    pub kind: ConsentKind,
    pub user_id: String,
    pub grantee: Grantee,
    pub fields: BTreeSet<String>,
    pub prior_version: u64,
    pub user_key: PublicKey,
    pub signature: Signature,
}

impl ConsentEvent {
    /// Builds an event for `user`; the user id is the user's address.
    pub fn signed(
        user: &NodeIdentity,
        kind: ConsentKind,
        grantee: Grantee,
        fields: impl IntoIterator<Item = impl Into<String>>,
        prior_version: u64,
    ) -> Self {
        let fields: BTreeSet<String> = fields.into_iter().map(Into::into).collect();
        let user_id = user.address().to_string();
        let user_key = user.public_key();
        let body = Self::body(kind, &user_id, &grantee, &fields, prior_version, &user_key);
        ConsentEvent {
            kind,
            user_id,
            grantee,
            fields,
            prior_version,
            user_key,
            signature: user.sign(&body),
        }
    }

    fn body(
        kind: ConsentKind,
        user_id: &str,
        grantee: &Grantee,
        fields: &BTreeSet<String>,
        prior_version: u64,
        user_key: &PublicKey,
    ) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(EVENT_DOMAIN).u8(kind.tag()).str(user_id);
        grantee.encode(&mut enc);
        enc.u32(fields.len() as u32);
        for f in fields {
            enc.str(f);
        }
        enc.u64(prior_version).raw(&user_key.0);
        enc.into_bytes()
    }

    /// The key must belong to `user_id` and the signature must cover the
    /// whole event.
    pub fn verify_signature(&self) -> Result<(), ConsentError> {
        if self.user_key.address().as_str() != self.user_id {
            return Err(ConsentError::BadSignature);
        }
        let body = Self::body(
            self.kind,
            &self.user_id,
            &self.grantee,
            &self.fields,
            self.prior_version,
            &self.user_key,
        );
        if self.user_key.verify(&body, &self.signature) {
            Ok(())
        } else {
            Err(ConsentError::BadSignature)
        }
    }
}

impl Canonical for ConsentEvent {
    fn encode(&self, enc: &mut Encoder) {
        enc.u8(self.kind.tag()).str(&self.user_id);
        self.grantee.encode(enc);
        enc.u32(self.fields.len() as u32);
        for f in &self.fields {
            enc.str(f);
        }
        enc.u64(self.prior_version)
            .raw(&self.user_key.0)
            .raw(&self.signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let kind = match dec.u8()? {
            1 => ConsentKind::Grant,
            2 => ConsentKind::Alter,
            3 => ConsentKind::Withdraw,
            tag => {
                return Err(DecodeError::InvalidTag {
                    what: "consent kind",
                    tag,
                })
            }
        };
        let user_id = dec.string()?;
        let grantee = Grantee::decode(dec)?;
        let count = dec.u32()? as usize;
        let mut fields = BTreeSet::new();
        let mut last: Option<String> = None;
        for _ in 0..count {
            let f = dec.string()?;
            // Sorted and unique, so the encoding stays canonical.
            if last.as_ref().is_some_and(|l| *l >= f) {
                return Err(DecodeError::Invalid("consent fields out of order".into()));
            }
            last = Some(f.clone());
            fields.insert(f);
        }
        Ok(ConsentEvent {
            kind,
            user_id,
            grantee,
            fields,
            prior_version: dec.u64()?,
            user_key: PublicKey(dec.array()?),
            signature: Signature(dec.array()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub user_id: String,
    pub grantee: Grantee,
    pub allowed_fields: BTreeSet<String>,
    pub state: ConsentState,
    pub version: u64,
    pub updated_at: u64,
}

impl ConsentRecord {
    /// Fields in force: empty once withdrawn.
    pub fn effective_fields(&self) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        match self.state {
            ConsentState::Active => &self.allowed_fields,
            ConsentState::Withdrawn => &EMPTY,
        }
    }
}

/// One step of the state machine. `record` must be the current record for
/// the event's `(user_id, grantee)`, or `None` when there is none yet.
pub fn transition(
    record: Option<&ConsentRecord>,
    event: &ConsentEvent,
    now: u64,
) -> Result<ConsentRecord, ConsentError> {
    event.verify_signature()?;
    let current = record.map(|r| r.state);
    let allowed = matches!(
        (current, event.kind),
        (None | Some(ConsentState::Withdrawn), ConsentKind::Grant)
            | (Some(ConsentState::Active), ConsentKind::Alter)
            | (Some(ConsentState::Active), ConsentKind::Withdraw)
    );
    if !allowed {
        return Err(ConsentError::InvalidTransition {
            kind: event.kind,
            current,
        });
    }
    let version = record.map_or(0, |r| r.version);
    if event.prior_version != version {
        return Err(ConsentError::StaleVersion {
            expected: version,
            got: event.prior_version,
        });
    }
    let (state, allowed_fields) = match event.kind {
        ConsentKind::Grant | ConsentKind::Alter => {
            if event.fields.is_empty() {
                return Err(ConsentError::EmptyFields(event.kind));
            }
            (ConsentState::Active, event.fields.clone())
        }
        ConsentKind::Withdraw => (ConsentState::Withdrawn, BTreeSet::new()),
    };
    Ok(ConsentRecord {
        user_id: event.user_id.clone(),
        grantee: event.grantee.clone(),
        allowed_fields,
        state,
        version: version + 1,
        updated_at: now,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub at: u64,
    pub event: ConsentEvent,
}

/// All consent records plus each user's chronological event history.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsentTable {
    records: BTreeMap<(String, Grantee), ConsentRecord>,
    trails: BTreeMap<String, Vec<AuditEntry>>,
}

impl ConsentTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, user_id: &str, grantee: &Grantee) -> Option<&ConsentRecord> {
        self.records.get(&(user_id.to_owned(), grantee.clone()))
    }

    pub fn records(&self) -> impl Iterator<Item = &ConsentRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks an event against the table without applying it.
    pub fn check(&self, event: &ConsentEvent, now: u64) -> Result<ConsentRecord, ConsentError> {
        transition(self.record(&event.user_id, &event.grantee), event, now)
    }

    pub fn apply(&mut self, event: ConsentEvent, now: u64) -> Result<&ConsentRecord, ConsentError> {
        let next = self.check(&event, now)?;
        let key = (event.user_id.clone(), event.grantee.clone());
        self.trails
            .entry(event.user_id.clone())
            .or_default()
            .push(AuditEntry { at: now, event });
        self.records.insert(key.clone(), next);
        Ok(&self.records[&key])
    }

    pub fn audit_trail(&self, user_id: &str) -> &[AuditEntry] {
        self.trails.get(user_id).map_or(&[], Vec::as_slice)
    }

    /// ACTIVE fields available to `grantee`: its own record plus any
    /// wildcard record. `None` when neither is active.
    pub fn active_fields(&self, user_id: &str, grantee: &Address) -> Option<BTreeSet<String>> {
        let specific = self.record(user_id, &Grantee::Address(grantee.clone()));
        let wildcard = self.record(user_id, &Grantee::Any);
        let mut any_active = false;
        let mut fields = BTreeSet::new();
        for rec in [specific, wildcard].into_iter().flatten() {
            if rec.state == ConsentState::Active {
                any_active = true;
                fields.extend(rec.allowed_fields.iter().cloned());
            }
        }
        any_active.then_some(fields)
    }

    /// Default deny: without an ACTIVE record every requested field is
    /// reported missing.
    pub fn gate_share<S: AsRef<str>>(
        &self,
        user_id: &str,
        grantee: &Address,
        fields: &[S],
    ) -> Result<(), ConsentDenied> {
        let covered = self.active_fields(user_id, grantee);
        let missing: BTreeSet<String> = fields
            .iter()
            .map(|f| f.as_ref())
            .filter(|f| !covered.as_ref().is_some_and(|c| c.contains(*f)))
            .map(str::to_owned)
            .collect();
        if covered.is_some() && missing.is_empty() {
            Ok(())
        } else {
            Err(ConsentDenied {
                user_id: user_id.to_owned(),
                grantee: grantee.clone(),
                missing,
            })
        }
    }

    pub(crate) fn encode_state(&self, enc: &mut Encoder) {
        enc.u32(self.records.len() as u32);
        for rec in self.records.values() {
            enc.str(&rec.user_id);
            rec.grantee.encode(enc);
            enc.u32(rec.allowed_fields.len() as u32);
            for f in &rec.allowed_fields {
                enc.str(f);
            }
            enc.bool(rec.state == ConsentState::Active)
                .u64(rec.version)
                .u64(rec.updated_at);
        }
        enc.u32(self.trails.len() as u32);
        for (user, trail) in &self.trails {
            enc.str(user).u32(trail.len() as u32);
            for entry in trail {
                enc.u64(entry.at);
                entry.event.encode(enc);
            }
        }
    }
}

/// Folds a trail from the empty state; yields the records it produces.
pub fn replay(trail: &[AuditEntry]) -> Result<ConsentTable, ConsentError> {
    let mut table = ConsentTable::new();
    for entry in trail {
        table.apply(entry.event.clone(), entry.at)?;
    }
    Ok(table)
}
