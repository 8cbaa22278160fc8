//! The hash-linked block sequence, its index, and full-replay validation.

use std::mem::size_of;

use serde::Serialize;
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::crypto::{Address, NodeIdentity};
use crate::hash::Hash256;
use crate::permissions::Permission;

use super::block::{Block, Transaction};
use super::params::{ChainParams, ParamsError};
use super::state::{ChainState, TxError};

const SNAPSHOT_MAGIC: &[u8; 4] = b"CCSN";
const SNAPSHOT_VERSION: u16 = 1;

/// One in-memory index entry per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexEntry {
    pub height: u64,
    pub block_hash: Hash256,
    /// State hash after applying the block.
    pub state_hash: Hash256,
    /// Offset of the block's record inside a snapshot's block section.
    pub byte_offset: u64,
    pub tx_count: u32,
}

/// Fixed per-block footprint of the index.
pub const INDEX_ENTRY_BYTES: u64 = size_of::<IndexEntry>() as u64;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BlockIndex {
    entries: Vec<IndexEntry>,
    next_offset: u64,
}

impl BlockIndex {
    fn push(&mut self, block: &Block, state_hash: Hash256) {
        let record_len = 4 + block.encoded_len() as u64;
        self.entries.push(IndexEntry {
            height: block.height,
            block_hash: block.block_hash,
            state_hash,
            byte_offset: self.next_offset,
            tx_count: block.transactions.len() as u32,
        });
        self.next_offset += record_len;
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn get(&self, height: u64) -> Option<&IndexEntry> {
        self.entries.get(height as usize)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn memory_bytes(&self) -> u64 {
        self.entries.len() as u64 * INDEX_ENTRY_BYTES
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryAccounting {
    pub blocks: u64,
    pub index_bytes: u64,
    pub state_bytes: u64,
    pub per_block_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationReason {
    #[error("block hash does not match its header")]
    HashMismatch,
    #[error("prev_hash does not link to the parent block")]
    BrokenLink,
    #[error("miner signature does not verify")]
    BadSignature,
    #[error("miner {0} lacks mine permission")]
    UnpermittedMiner(Address),
    #[error("miner {got} produced out of turn; expected {expected}")]
    OutOfTurn { expected: Address, got: Address },
    #[error("expected height {expected}, found {found}")]
    HeightMismatch { expected: u64, found: u64 },
    #[error("timestamp {got} precedes parent timestamp {previous}")]
    TimestampRegression { previous: u64, got: u64 },
    #[error("block of {size} bytes exceeds the {limit}-byte limit")]
    TooLarge { size: u64, limit: u64 },
    #[error("transaction {index} invalid: {reason}")]
    InvalidTransaction { index: usize, reason: TxError },
    #[error("genesis block must carry no transactions")]
    GenesisMismatch,
    #[error("undecodable block: {0}")]
    Decode(DecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("block {height}: {reason}")]
pub struct ValidationError {
    pub height: u64,
    pub reason: ValidationReason,
}

/// Rejections when producing a new block locally.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("{0} does not hold mine permission")]
    NotPermittedMiner(Address),
    #[error("it is {expected}'s turn to mine, not {got}")]
    OutOfTurn { expected: Address, got: Address },
    #[error("block of {size} bytes exceeds the {limit}-byte limit")]
    BlockTooLarge { size: u64, limit: u64 },
    #[error("transaction {index} invalid: {reason}")]
    InvalidTransaction { index: usize, reason: TxError },
    #[error("timestamp {got} precedes parent timestamp {previous}")]
    TimestampRegression { previous: u64, got: u64 },
    #[error(transparent)]
    Rejected(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatchUpError {
    #[error("snapshot is unreadable: {0}")]
    Decode(#[from] DecodeError),
    #[error("invalid chain parameters: {0}")]
    Params(#[from] ParamsError),
    #[error("replay halted: {error}")]
    Halted {
        error: ValidationError,
        /// Everything before the failing block; `None` when genesis itself
        /// is bad.
        partial: Option<Box<Chain>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chain {
    params: ChainParams,
    blocks: Vec<Block>,
    index: BlockIndex,
    state: ChainState,
}

/// Creates a chain holding only the genesis block, mined by the founder.
pub fn create_chain(
    params: ChainParams,
    founder: &NodeIdentity,
    timestamp: u64,
) -> Result<Chain, ParamsError> {
    params.validate()?;
    let genesis = Block::seal(0, Hash256::ZERO, timestamp, founder, Vec::new(), &params);
    let state = ChainState::genesis(&params, founder.address(), timestamp);
    let mut index = BlockIndex::default();
    index.push(&genesis, state.state_hash());
    Ok(Chain {
        params,
        blocks: vec![genesis],
        index,
        state,
    })
}

/// Checks `block` as the successor of `parent` (or as genesis when `parent`
/// is `None`) against `state`, returning the successor state.
fn check_block(
    params: &ChainParams,
    parent: Option<&Block>,
    state: Option<&ChainState>,
    block: &Block,
) -> Result<ChainState, ValidationReason> {
    let expected_height = parent.map_or(0, |p| p.height + 1);
    if block.height != expected_height {
        return Err(ValidationReason::HeightMismatch {
            expected: expected_height,
            found: block.height,
        });
    }
    let expected_prev = parent.map_or(Hash256::ZERO, |p| p.block_hash);
    if block.prev_hash != expected_prev {
        return Err(ValidationReason::BrokenLink);
    }
    if block.compute_hash(params) != block.block_hash {
        return Err(ValidationReason::HashMismatch);
    }
    if !block.signature_valid() {
        return Err(ValidationReason::BadSignature);
    }
    let size = block.encoded_len() as u64;
    if size > params.max_block_size {
        return Err(ValidationReason::TooLarge {
            size,
            limit: params.max_block_size,
        });
    }
    let (parent, state) = match (parent, state) {
        (Some(p), Some(s)) => (p, s),
        _ => {
            if !block.transactions.is_empty() {
                return Err(ValidationReason::GenesisMismatch);
            }
            return Ok(ChainState::genesis(params, &block.miner, block.timestamp));
        }
    };
    if block.timestamp < parent.timestamp {
        return Err(ValidationReason::TimestampRegression {
            previous: parent.timestamp,
            got: block.timestamp,
        });
    }
    check_miner(state, block.height, &block.miner)?;
    state
        .apply_block(block.height, block.timestamp, &block.transactions)
        .map_err(|(index, reason)| ValidationReason::InvalidTransaction { index, reason })
}

fn check_miner(state: &ChainState, height: u64, miner: &Address) -> Result<(), ValidationReason> {
    if !state.permissions().check_permission(miner, Permission::Mine) {
        return Err(ValidationReason::UnpermittedMiner(miner.clone()));
    }
    match state.expected_miner(height) {
        Some(expected) if expected != miner => Err(ValidationReason::OutOfTurn {
            expected: expected.clone(),
            got: miner.clone(),
        }),
        _ => Ok(()),
    }
}

impl Chain {
    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn index(&self) -> &BlockIndex {
        &self.index
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("a chain always holds genesis")
    }

    pub fn founder(&self) -> &Address {
        &self.blocks[0].miner
    }

    pub fn state_hash(&self) -> Hash256 {
        self.state.state_hash()
    }

    /// State hash recorded after the block at `height`.
    pub fn state_hash_at(&self, height: u64) -> Option<Hash256> {
        self.index.get(height).map(|e| e.state_hash)
    }

    /// Who must mine the next block, if rotation applies.
    pub fn next_miner(&self) -> Option<&Address> {
        self.state.expected_miner(self.height() + 1)
    }

    /// Mines `txs` into a new block. `now` is clamped to the parent's
    /// timestamp only by rejecting regressions; callers supply the clock.
    pub fn append_block(
        &mut self,
        txs: Vec<Transaction>,
        miner: &NodeIdentity,
        now: u64,
    ) -> Result<&Block, ChainError> {
        let height = self.height() + 1;
        check_miner(&self.state, height, miner.address()).map_err(|r| match r {
            ValidationReason::OutOfTurn { expected, got } => ChainError::OutOfTurn { expected, got },
            _ => ChainError::NotPermittedMiner(miner.address().clone()),
        })?;
        let previous = self.tip().timestamp;
        if now < previous {
            return Err(ChainError::TimestampRegression { previous, got: now });
        }
        let next = self
            .state
            .apply_block(height, now, &txs)
            .map_err(|(index, reason)| ChainError::InvalidTransaction { index, reason })?;
        let block = Block::seal(height, self.tip().block_hash, now, miner, txs, &self.params);
        let size = block.encoded_len() as u64;
        if size > self.params.max_block_size {
            return Err(ChainError::BlockTooLarge {
                size,
                limit: self.params.max_block_size,
            });
        }
        self.commit(block, next);
        Ok(self.tip())
    }

    /// Validates a block received from elsewhere and appends it.
    pub fn accept_block(&mut self, block: Block) -> Result<(), ValidationError> {
        let next = check_block(&self.params, Some(self.tip()), Some(&self.state), &block).map_err(
            |reason| ValidationError {
                height: block.height,
                reason,
            },
        )?;
        self.commit(block, next);
        Ok(())
    }

    fn commit(&mut self, block: Block, state: ChainState) {
        self.index.push(&block, state.state_hash());
        self.blocks.push(block);
        self.state = state;
    }

    /// Replays every block from genesis.
    pub fn validate_chain(&self) -> Result<(), ValidationError> {
        validate_blocks(&self.params, &self.blocks)
    }

    /// Rebuilds a chain by replaying `blocks`; on failure returns the chain
    /// up to the last good block alongside the error.
    pub fn from_blocks(
        params: ChainParams,
        blocks: Vec<Block>,
    ) -> Result<Chain, (ValidationError, Option<Chain>)> {
        let mut iter = blocks.into_iter();
        let genesis = match iter.next() {
            Some(g) => g,
            None => {
                return Err((
                    ValidationError {
                        height: 0,
                        reason: ValidationReason::GenesisMismatch,
                    },
                    None,
                ))
            }
        };
        let state = check_block(&params, None, None, &genesis).map_err(|reason| {
            (ValidationError { height: 0, reason }, None)
        })?;
        let mut index = BlockIndex::default();
        index.push(&genesis, state.state_hash());
        let mut chain = Chain {
            params,
            blocks: vec![genesis],
            index,
            state,
        };
        for block in iter {
            if let Err(e) = chain.accept_block(block) {
                return Err((e, Some(chain)));
            }
        }
        Ok(chain)
    }

    /// Self-describing binary form: magic, version, protocol tag, chain
    /// parameters, then length-prefixed blocks.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.raw(SNAPSHOT_MAGIC)
            .u16(SNAPSHOT_VERSION)
            .str(&self.params.protocol_tag);
        self.params.encode(&mut enc);
        enc.u32(self.blocks.len() as u32);
        for block in &self.blocks {
            enc.bytes(&block.to_canonical_bytes());
        }
        enc.into_bytes()
    }

    pub fn memory_report(&self) -> MemoryAccounting {
        let blocks = self.blocks.len() as u64;
        let index_bytes = self.index.memory_bytes();
        MemoryAccounting {
            blocks,
            index_bytes,
            state_bytes: self.state.encoded_len() as u64,
            per_block_bytes: index_bytes / blocks,
        }
    }
}

/// Validates a block sequence from genesis, reporting the first failure.
pub fn validate_blocks(params: &ChainParams, blocks: &[Block]) -> Result<(), ValidationError> {
    let mut state: Option<ChainState> = None;
    let mut parent: Option<&Block> = None;
    if blocks.is_empty() {
        return Err(ValidationError {
            height: 0,
            reason: ValidationReason::GenesisMismatch,
        });
    }
    for (i, block) in blocks.iter().enumerate() {
        let next = check_block(params, parent, state.as_ref(), block).map_err(|reason| {
            ValidationError {
                // A block claiming the wrong height is reported at its position.
                height: i as u64,
                reason,
            }
        })?;
        state = Some(next);
        parent = Some(block);
    }
    Ok(())
}

/// Rebuilds chain state on a fresh node by replaying a snapshot.
pub fn catch_up(snapshot: &[u8]) -> Result<Chain, CatchUpError> {
    let mut dec = Decoder::new(snapshot);
    if dec.raw(4)? != SNAPSHOT_MAGIC {
        return Err(DecodeError::Invalid("not a chain snapshot".into()).into());
    }
    let version = dec.u16()?;
    if version != SNAPSHOT_VERSION {
        return Err(DecodeError::Invalid(format!("unsupported snapshot version {version}")).into());
    }
    let tag = dec.string()?;
    let params = ChainParams::decode(&mut dec)?;
    if tag != params.protocol_tag {
        return Err(DecodeError::Invalid(format!(
            "snapshot tagged {tag:?} but parameters say {:?}",
            params.protocol_tag
        ))
        .into());
    }
    params.validate()?;
    let count = dec.u32()? as usize;
    let mut raw_blocks = Vec::with_capacity(count.min(dec.remaining() / 4));
    for _ in 0..count {
        raw_blocks.push(dec.bytes()?);
    }
    dec.finish()?;

    let mut blocks = Vec::with_capacity(raw_blocks.len());
    let mut decode_failure = None;
    for (i, raw) in raw_blocks.into_iter().enumerate() {
        match Block::from_canonical_bytes(raw) {
            Ok(b) => blocks.push(b),
            Err(e) => {
                decode_failure = Some(ValidationError {
                    height: i as u64,
                    reason: ValidationReason::Decode(e),
                });
                break;
            }
        }
    }
    match (Chain::from_blocks(params, blocks), decode_failure) {
        (Ok(chain), None) => Ok(chain),
        (Ok(chain), Some(error)) => Err(CatchUpError::Halted {
            error,
            partial: Some(Box::new(chain)),
        }),
        (Err((error, partial)), _) => Err(CatchUpError::Halted {
            error,
            partial: partial.map(Box::new),
        }),
    }
}
