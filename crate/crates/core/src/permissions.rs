//! The eight-permission model and the admin/activate authority rules.
//!
//! Admin may change any flag of any address. Activate may change only
//! `connect`, `send` and `receive`. Nobody else may change anything, except
//! that stream creators (and admins) manage the writer list of a restricted
//! stream.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::Address;
use crate::ledger::{ChainState, Payload, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Permission {
    Connect,
    Send,
    Receive,
    Issue,
    Create,
    Mine,
    Admin,
    Activate,
}

impl Permission {
    /// Canonical order; also the order in which "first offending flag" is
    /// reported.
    pub const ALL: [Permission; 8] = [
        Permission::Connect,
        Permission::Send,
        Permission::Receive,
        Permission::Issue,
        Permission::Create,
        Permission::Mine,
        Permission::Admin,
        Permission::Activate,
    ];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Permission::Connect => "connect",
            Permission::Send => "send",
            Permission::Receive => "receive",
            Permission::Issue => "issue",
            Permission::Create => "create",
            Permission::Mine => "mine",
            Permission::Admin => "admin",
            Permission::Activate => "activate",
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown permission {0:?}")]
pub struct UnknownPermission(pub String);

impl FromStr for Permission {
    type Err = UnknownPermission;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Permission::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| UnknownPermission(s.to_owned()))
    }
}

/// A subset of the eight permissions, stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct PermissionSet(u8);

impl PermissionSet {
    pub const EMPTY: PermissionSet = PermissionSet(0);
    pub const ALL: PermissionSet = PermissionSet(0xff);

    pub fn from_bits(bits: u8) -> Self {
        PermissionSet(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, p: Permission) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn insert(&mut self, p: Permission) {
        self.0 |= p.bit();
    }

    pub fn remove(&mut self, p: Permission) {
        self.0 &= !p.bit();
    }

    pub fn with(mut self, p: Permission) -> Self {
        self.insert(p);
        self
    }

    pub fn union(self, other: Self) -> Self {
        PermissionSet(self.0 | other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        PermissionSet(self.0 & !other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        PermissionSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Permission> {
        Permission::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    /// Parses `connect,send` or `connect, send`.
    pub fn parse_list(s: &str) -> Result<Self, UnknownPermission> {
        s.split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Permission::from_str)
            .collect()
    }
}

impl FromIterator<Permission> for PermissionSet {
    fn from_iter<I: IntoIterator<Item = Permission>>(iter: I) -> Self {
        let mut set = PermissionSet::EMPTY;
        for p in iter {
            set.insert(p);
        }
        set
    }
}

impl<const N: usize> From<[Permission; N]> for PermissionSet {
    fn from(flags: [Permission; N]) -> Self {
        flags.into_iter().collect()
    }
}

impl fmt::Display for PermissionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(Permission::name).collect();
        f.write_str(&names.join(", "))
    }
}

impl fmt::Debug for PermissionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl Serialize for PermissionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for PermissionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flags = Vec::<Permission>::deserialize(d)?;
        Ok(flags.into_iter().collect())
    }
}

/// Flags an `activate` holder may change.
pub const ACTIVATE_SCOPE: PermissionSet = PermissionSet(0b111);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrantDirection {
    Grant,
    Revoke,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GrantScope {
    /// Global permission flags.
    Flags(PermissionSet),
    /// Write access to a restricted stream.
    StreamWrite(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantPayload {
    pub target: Address,
    pub scope: GrantScope,
}

impl GrantPayload {
    pub fn flags(target: Address, flags: impl Into<PermissionSet>) -> Self {
        GrantPayload {
            target,
            scope: GrantScope::Flags(flags.into()),
        }
    }

    pub fn stream_write(target: Address, stream: impl Into<String>) -> Self {
        GrantPayload {
            target,
            scope: GrantScope::StreamWrite(stream.into()),
        }
    }
}

/// The net effect of a grant or revoke: disjoint add and remove sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermissionChange {
    pub add: PermissionSet,
    pub remove: PermissionSet,
}

impl PermissionChange {
    pub fn new(direction: GrantDirection, flags: PermissionSet) -> Self {
        match direction {
            GrantDirection::Grant => PermissionChange {
                add: flags,
                remove: PermissionSet::EMPTY,
            },
            GrantDirection::Revoke => PermissionChange {
                add: PermissionSet::EMPTY,
                remove: flags,
            },
        }
    }

    pub fn touched(&self) -> PermissionSet {
        self.add.union(self.remove)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Denied {
    #[error("missing {0} permission")]
    Missing(Permission),
    #[error("not authorized to change {0}")]
    NotAuthorized(Permission),
    #[error("revocation would leave the chain without an admin")]
    LastAdmin,
    #[error("no such stream {0:?}")]
    NoSuchStream(String),
    #[error("not a writer of stream {0:?}")]
    NotStreamWriter(String),
    #[error("only the creator or an admin may change writers of stream {0:?}")]
    NotStreamOwner(String),
}

/// Explicit per-address permission sets plus the chain-wide `anyone-can-*`
/// defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermissionStateMap {
    explicit: BTreeMap<Address, PermissionSet>,
    defaults: PermissionSet,
    anyone_can_receive_empty: bool,
}

impl PermissionStateMap {
    pub fn new(defaults: PermissionSet, anyone_can_receive_empty: bool) -> Self {
        PermissionStateMap {
            explicit: BTreeMap::new(),
            defaults,
            anyone_can_receive_empty,
        }
    }

    pub fn defaults(&self) -> PermissionSet {
        self.defaults
    }

    pub fn explicit(&self, address: &Address) -> PermissionSet {
        self.explicit.get(address).copied().unwrap_or_default()
    }

    /// Explicit flags plus the chain-wide defaults.
    pub fn effective(&self, address: &Address) -> PermissionSet {
        self.explicit(address).union(self.defaults)
    }

    pub fn check_permission(&self, address: &Address, flag: Permission) -> bool {
        self.effective(address).contains(flag)
    }

    /// `receive-empty` is not one of the eight flags; it is implied by
    /// `receive` or granted to everyone by the chain parameter.
    pub fn can_receive_empty(&self, address: &Address) -> bool {
        self.anyone_can_receive_empty || self.check_permission(address, Permission::Receive)
    }

    pub fn can_receive_empty_by_default(&self) -> bool {
        self.anyone_can_receive_empty
    }

    /// Addresses explicitly holding `flag`, in address order.
    pub fn holders(&self, flag: Permission) -> impl Iterator<Item = &Address> {
        self.explicit
            .iter()
            .filter(move |(_, set)| set.contains(flag))
            .map(|(a, _)| a)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Address, PermissionSet)> {
        self.explicit.iter().map(|(a, s)| (a, *s))
    }

    pub fn len(&self) -> usize {
        self.explicit.len()
    }

    pub fn is_empty(&self) -> bool {
        self.explicit.is_empty()
    }

    /// Overwrites the explicit set. Empty sets are dropped so that equal
    /// content always has equal representation.
    pub fn set(&mut self, address: Address, flags: PermissionSet) {
        if flags.is_empty() {
            self.explicit.remove(&address);
        } else {
            self.explicit.insert(address, flags);
        }
    }

    /// Checks a change against the signer's authority without applying it.
    pub fn authorize_change(
        &self,
        signer: &Address,
        target: &Address,
        change: PermissionChange,
    ) -> Result<(), Denied> {
        check_authority(self.effective(signer), change.touched())?;
        if change.remove.contains(Permission::Admin)
            && !self.defaults.contains(Permission::Admin)
            && self.explicit(target).contains(Permission::Admin)
            && self.holders(Permission::Admin).count() == 1
        {
            return Err(Denied::LastAdmin);
        }
        Ok(())
    }

    /// Applies a grant or revoke in place; on error nothing changes.
    pub fn apply_change(
        &mut self,
        signer: &Address,
        target: &Address,
        change: PermissionChange,
    ) -> Result<(), Denied> {
        self.authorize_change(signer, target, change)?;
        let next = self
            .explicit(target)
            .union(change.add)
            .difference(change.remove);
        self.set(target.clone(), next);
        Ok(())
    }
}

/// Authority rule: admin may touch anything, activate only the
/// connect/send/receive scope, everyone else nothing. Touching nothing is
/// always allowed.
pub fn check_authority(signer: PermissionSet, touched: PermissionSet) -> Result<(), Denied> {
    if touched.is_empty() || signer.contains(Permission::Admin) {
        return Ok(());
    }
    let allowed = if signer.contains(Permission::Activate) {
        ACTIVATE_SCOPE
    } else {
        PermissionSet::EMPTY
    };
    match touched.difference(allowed).iter().next() {
        Some(flag) => Err(Denied::NotAuthorized(flag)),
        None => Ok(()),
    }
}

/// Pure form of a global-flag grant or revoke.
pub fn apply_grant(
    state: &PermissionStateMap,
    signer: &Address,
    direction: GrantDirection,
    target: &Address,
    flags: PermissionSet,
) -> Result<PermissionStateMap, Denied> {
    let mut next = state.clone();
    next.apply_change(signer, target, PermissionChange::new(direction, flags))?;
    Ok(next)
}

/// Permission gate for a transaction against confirmed chain state.
///
/// This covers authority only; payload well-formedness, nonces and
/// duplicate stream names are checked when the transaction is applied.
pub fn authorize_tx(state: &ChainState, tx: &Transaction) -> Result<(), Denied> {
    let perms = state.permissions();
    let signer = &tx.signer;
    match &tx.payload {
        Payload::Grant(grant) | Payload::Revoke(grant) => {
            let direction = match tx.payload {
                Payload::Grant(_) => GrantDirection::Grant,
                _ => GrantDirection::Revoke,
            };
            match &grant.scope {
                GrantScope::Flags(flags) => perms.authorize_change(
                    signer,
                    &grant.target,
                    PermissionChange::new(direction, *flags),
                ),
                GrantScope::StreamWrite(name) => {
                    let stream = state
                        .stream(name)
                        .ok_or_else(|| Denied::NoSuchStream(name.clone()))?;
                    if &stream.creator == signer || perms.check_permission(signer, Permission::Admin)
                    {
                        Ok(())
                    } else {
                        Err(Denied::NotStreamOwner(name.clone()))
                    }
                }
            }
        }
        Payload::StreamCreate { .. } => {
            if perms.check_permission(signer, Permission::Create) {
                Ok(())
            } else {
                Err(Denied::Missing(Permission::Create))
            }
        }
        Payload::StreamPublish { stream, .. } => {
            if !perms.check_permission(signer, Permission::Send) {
                return Err(Denied::Missing(Permission::Send));
            }
            let entry = state
                .stream(stream)
                .ok_or_else(|| Denied::NoSuchStream(stream.clone()))?;
            if entry.may_write(signer) {
                Ok(())
            } else {
                Err(Denied::NotStreamWriter(stream.clone()))
            }
        }
    }
}
