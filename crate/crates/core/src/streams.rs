//! Named append-only publication channels.
//!
//! Stream metadata (creator, open flag, item and publisher counts) is chain
//! state and is the same on every node. Item bodies are indexed only by
//! nodes that subscribed to the stream; subscribing replays the stream from
//! the chain.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::Address;
use crate::ledger::{Block, ChainError, Payload, Transaction};
use crate::node::Node;
use crate::permissions::{Denied, Permission};

pub const PUBKEYS_STREAM: &str = "pubkeys";
pub const ITEMS_STREAM: &str = "items";
pub const ACCESS_STREAM: &str = "access";
pub const CONSENT_STREAM: &str = "consent";

/// Streams created by the founder right after genesis.
pub const WELL_KNOWN_STREAMS: [&str; 4] = [PUBKEYS_STREAM, ITEMS_STREAM, ACCESS_STREAM, CONSENT_STREAM];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stream {
    pub name: String,
    pub creator: Address,
    pub open: bool,
    pub created_at: u64,
    pub item_count: u64,
    pub publishers: BTreeSet<Address>,
    /// Addresses granted write access to a restricted stream.
    pub writers: BTreeSet<Address>,
}

impl Stream {
    pub fn new(name: String, creator: Address, open: bool, created_at: u64) -> Self {
        Stream {
            name,
            creator,
            open,
            created_at,
            item_count: 0,
            publishers: BTreeSet::new(),
            writers: BTreeSet::new(),
        }
    }

    pub fn may_write(&self, who: &Address) -> bool {
        self.open || *who == self.creator || self.writers.contains(who)
    }
}

/// Position of a confirmed item: block height and index within the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct ItemRef {
    pub height: u64,
    pub tx_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamItem {
    pub stream: String,
    pub publisher: Address,
    pub key: Option<String>,
    #[serde(with = "hex_bytes")]
    pub data: Vec<u8>,
    pub published_at: u64,
    pub confirmed: bool,
    pub item_ref: Option<ItemRef>,
    #[serde(skip)]
    pub tx_id: crate::hash::Hash256,
}

mod hex_bytes {
    pub fn serialize<S: serde::Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StreamSummary {
    pub name: String,
    pub creator: Address,
    pub open: bool,
    pub item_count: u64,
    pub publisher_count: usize,
    pub subscribed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ItemFilter {
    pub key: Option<String>,
    pub publisher: Option<Address>,
}

impl ItemFilter {
    pub fn key(key: impl Into<String>) -> Self {
        ItemFilter {
            key: Some(key.into()),
            publisher: None,
        }
    }

    pub fn publisher(publisher: Address) -> Self {
        ItemFilter {
            key: None,
            publisher: Some(publisher),
        }
    }

    pub fn matches(&self, item: &StreamItem) -> bool {
        self.key.as_ref().map_or(true, |k| item.key.as_ref() == Some(k))
            && self.publisher.as_ref().map_or(true, |p| item.publisher == *p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error(transparent)]
    Denied(#[from] Denied),
    #[error("stream {0:?} already exists")]
    DuplicateName(String),
    #[error("stream name must be non-empty")]
    EmptyName,
    #[error("no such stream {0:?}")]
    NoSuchStream(String),
    #[error("not a writer of stream {0:?}")]
    NotStreamWriter(String),
    #[error("item of {size} bytes exceeds the {limit}-byte limit")]
    ItemTooLarge { size: usize, limit: usize },
    #[error("not subscribed to stream {0:?}")]
    NotSubscribed(String),
    #[error("node is not running")]
    Stopped,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Items of `stream` carried by one block, in transaction order.
pub(crate) fn items_in_block<'a>(
    block: &'a Block,
    stream: &'a str,
) -> impl Iterator<Item = StreamItem> + 'a {
    block
        .transactions
        .iter()
        .enumerate()
        .filter_map(move |(idx, tx)| confirmed_item(block, idx, tx, stream))
}

fn confirmed_item(block: &Block, idx: usize, tx: &Transaction, stream: &str) -> Option<StreamItem> {
    match &tx.payload {
        Payload::StreamPublish {
            stream: s,
            key,
            data,
        } if s == stream => Some(StreamItem {
            stream: s.clone(),
            publisher: tx.signer.clone(),
            key: key.clone(),
            data: data.clone(),
            published_at: block.timestamp,
            confirmed: true,
            item_ref: Some(ItemRef {
                height: block.height,
                tx_index: idx as u32,
            }),
            tx_id: tx.tx_id,
        }),
        _ => None,
    }
}

fn pending_item(tx: &Transaction, stream: &str) -> Option<StreamItem> {
    match &tx.payload {
        Payload::StreamPublish {
            stream: s,
            key,
            data,
        } if s == stream => Some(StreamItem {
            stream: s.clone(),
            publisher: tx.signer.clone(),
            key: key.clone(),
            data: data.clone(),
            published_at: 0,
            confirmed: false,
            item_ref: None,
            tx_id: tx.tx_id,
        }),
        _ => None,
    }
}

/// Bytes a block spends on everything except one publish payload; used to
/// bound item size.
pub const ITEM_ENVELOPE_OVERHEAD: usize = 512;

impl Node {
    /// Builds, signs and queues a stream-creation transaction.
    pub fn create_stream(&mut self, name: &str, open: bool) -> Result<Transaction, StreamError> {
        self.ensure_running()?;
        if name.trim().is_empty() {
            return Err(StreamError::EmptyName);
        }
        let state = self.chain().state();
        if !state.permissions().check_permission(self.address(), Permission::Create) {
            return Err(Denied::Missing(Permission::Create).into());
        }
        let pending_dup = self.pending().iter().any(|tx| {
            matches!(&tx.payload, Payload::StreamCreate { name: n, .. } if n == name)
        });
        if state.stream(name).is_some() || pending_dup {
            return Err(StreamError::DuplicateName(name.to_owned()));
        }
        Ok(self.submit_payload(Payload::StreamCreate {
            name: name.to_owned(),
            open,
        }))
    }

    /// Builds, signs and queues a publish. An empty key is recorded as no key.
    pub fn publish(
        &mut self,
        stream: &str,
        key: Option<&str>,
        data: Vec<u8>,
    ) -> Result<Transaction, StreamError> {
        self.ensure_running()?;
        let limit = (self.chain().params().max_block_size as usize).saturating_sub(ITEM_ENVELOPE_OVERHEAD);
        if data.len() > limit {
            return Err(StreamError::ItemTooLarge {
                size: data.len(),
                limit,
            });
        }
        let state = self.chain().state();
        if !state.permissions().check_permission(self.address(), Permission::Send) {
            return Err(Denied::Missing(Permission::Send).into());
        }
        let entry = state
            .stream(stream)
            .ok_or_else(|| StreamError::NoSuchStream(stream.to_owned()))?;
        if !entry.may_write(self.address()) {
            return Err(StreamError::NotStreamWriter(stream.to_owned()));
        }
        let key = key.filter(|k| !k.is_empty()).map(str::to_owned);
        Ok(self.submit_payload(Payload::StreamPublish {
            stream: stream.to_owned(),
            key,
            data,
        }))
    }

    /// Starts indexing `stream`. Repeated calls are no-ops.
    pub fn subscribe(&mut self, stream: &str) -> Result<(), StreamError> {
        if !self
            .chain()
            .state()
            .permissions()
            .check_permission(self.address(), Permission::Receive)
        {
            return Err(Denied::Missing(Permission::Receive).into());
        }
        if self.chain().state().stream(stream).is_none() {
            return Err(StreamError::NoSuchStream(stream.to_owned()));
        }
        if self.subscriptions.contains_key(stream) {
            return Ok(());
        }
        let items: Vec<StreamItem> = self
            .chain()
            .blocks()
            .iter()
            .flat_map(|b| items_in_block(b, stream))
            .collect();
        self.subscriptions.insert(stream.to_owned(), items);
        Ok(())
    }

    pub fn is_subscribed(&self, stream: &str) -> bool {
        self.subscriptions.contains_key(stream)
    }

    /// Every stream with its confirmed counts; available without
    /// subscribing.
    pub fn list_streams(&self) -> Result<Vec<StreamSummary>, StreamError> {
        let state = self.chain().state();
        if !state.permissions().check_permission(self.address(), Permission::Receive) {
            return Err(Denied::Missing(Permission::Receive).into());
        }
        Ok(state
            .streams()
            .map(|s| StreamSummary {
                name: s.name.clone(),
                creator: s.creator.clone(),
                open: s.open,
                item_count: s.item_count,
                publisher_count: s.publishers.len(),
                subscribed: self.subscriptions.contains_key(&s.name),
            })
            .collect())
    }

    /// Confirmed items in chain order, followed by this node's own pending
    /// publishes.
    pub fn get_items(&self, stream: &str, filter: &ItemFilter) -> Result<Vec<StreamItem>, StreamError> {
        let confirmed = self
            .subscriptions
            .get(stream)
            .ok_or_else(|| StreamError::NotSubscribed(stream.to_owned()))?;
        let pending = self.pending().iter().filter_map(|tx| pending_item(tx, stream));
        Ok(confirmed
            .iter()
            .cloned()
            .chain(pending)
            .filter(|item| filter.matches(item))
            .collect())
    }

    pub(crate) fn index_block(&mut self, block: &Block) {
        for (stream, items) in self.subscriptions.iter_mut() {
            items.extend(items_in_block(block, stream));
        }
    }
}
