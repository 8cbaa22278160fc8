//! Blocks, chain state, validation and replay.

mod block;
mod chain;
mod clock;
mod params;
mod state;

pub use block::{header_hash, transactions_root, Block, Payload, Transaction, TxIntegrityError};
pub use chain::{
    catch_up, create_chain, validate_blocks, BlockIndex, CatchUpError, Chain, ChainError,
    IndexEntry, MemoryAccounting, ValidationError, ValidationReason, INDEX_ENTRY_BYTES,
};
pub use clock::{Clock, ManualClock, SystemClock};
pub use params::{ChainParams, ParamsError, MAX_BLOCK_SIZE_RANGE, TARGET_BLOCK_TIME_RANGE};
pub use state::{ChainState, TxError};
