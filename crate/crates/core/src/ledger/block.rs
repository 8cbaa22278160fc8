//! Blocks, transactions and their canonical encodings.

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::crypto::{Address, NodeIdentity, PublicKey, Signature};
use crate::hash::Hash256;
use crate::permissions::{GrantPayload, GrantScope, PermissionSet};

use super::params::ChainParams;

const TX_DOMAIN: &[u8] = b"consentchain/tx/v1";
const HEADER_DOMAIN: &[u8] = b"consentchain/block/v1";
const GENESIS_DOMAIN: &[u8] = b"consentchain/genesis/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Grant(GrantPayload),
    Revoke(GrantPayload),
    StreamCreate {
        name: String,
        open: bool,
    },
    StreamPublish {
        stream: String,
        key: Option<String>,
        data: Vec<u8>,
    },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Grant(_) => "grant",
            Payload::Revoke(_) => "revoke",
            Payload::StreamCreate { .. } => "create-stream",
            Payload::StreamPublish { .. } => "publish",
        }
    }
}

fn encode_grant(g: &GrantPayload, enc: &mut Encoder) {
    g.target.encode(enc);
    match &g.scope {
        GrantScope::Flags(flags) => {
            enc.u8(0).u8(flags.bits());
        }
        GrantScope::StreamWrite(stream) => {
            enc.u8(1).str(stream);
        }
    }
}

fn decode_grant(dec: &mut Decoder<'_>) -> Result<GrantPayload, DecodeError> {
    let target = Address::decode(dec)?;
    let scope = match dec.u8()? {
        0 => GrantScope::Flags(PermissionSet::from_bits(dec.u8()?)),
        1 => GrantScope::StreamWrite(dec.string()?),
        tag => return Err(DecodeError::InvalidTag { what: "grant scope", tag }),
    };
    Ok(GrantPayload { target, scope })
}

impl Canonical for Payload {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Payload::Grant(g) => {
                enc.u8(1);
                encode_grant(g, enc);
            }
            Payload::Revoke(g) => {
                enc.u8(2);
                encode_grant(g, enc);
            }
            Payload::StreamCreate { name, open } => {
                enc.u8(3).str(name).bool(*open);
            }
            Payload::StreamPublish { stream, key, data } => {
                enc.u8(4).str(stream).opt_str(key.as_deref()).bytes(data);
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        match dec.u8()? {
            1 => Ok(Payload::Grant(decode_grant(dec)?)),
            2 => Ok(Payload::Revoke(decode_grant(dec)?)),
            3 => Ok(Payload::StreamCreate {
                name: dec.string()?,
                open: dec.bool()?,
            }),
            4 => Ok(Payload::StreamPublish {
                stream: dec.string()?,
                key: dec.opt_string()?,
                data: dec.bytes()?.to_vec(),
            }),
            tag => Err(DecodeError::InvalidTag { what: "payload", tag }),
        }
    }
}

/// Why a transaction fails its self-contained integrity checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum TxIntegrityError {
    #[error("tx_id does not match the signed body")]
    IdMismatch,
    #[error("signer address does not match the signer key")]
    SignerMismatch,
    #[error("signature does not verify")]
    BadSignature,
}

/// A signed state change. `tx_id` is the digest of the signed body
/// (signer, signer key, nonce, payload); the signature covers `tx_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: Hash256,
    pub signer: Address,
    pub signer_key: PublicKey,
    pub nonce: u64,
    pub payload: Payload,
    pub signature: Signature,
}

impl Transaction {
    pub fn new_signed(identity: &NodeIdentity, nonce: u64, payload: Payload) -> Self {
        let signer = identity.address().clone();
        let signer_key = identity.public_key();
        let tx_id = Self::body_digest(&signer, &signer_key, nonce, &payload);
        let signature = identity.sign(tx_id.as_bytes());
        Transaction {
            tx_id,
            signer,
            signer_key,
            nonce,
            payload,
            signature,
        }
    }

    fn body_digest(signer: &Address, key: &PublicKey, nonce: u64, payload: &Payload) -> Hash256 {
        let mut enc = Encoder::new();
        enc.raw(TX_DOMAIN);
        signer.encode(&mut enc);
        enc.raw(&key.0).u64(nonce);
        payload.encode(&mut enc);
        Hash256::digest(&enc.into_bytes())
    }

    pub fn compute_id(&self) -> Hash256 {
        Self::body_digest(&self.signer, &self.signer_key, self.nonce, &self.payload)
    }

    pub fn verify(&self) -> Result<(), TxIntegrityError> {
        if self.compute_id() != self.tx_id {
            return Err(TxIntegrityError::IdMismatch);
        }
        if self.signer_key.address() != self.signer {
            return Err(TxIntegrityError::SignerMismatch);
        }
        if !self.signer_key.verify(self.tx_id.as_bytes(), &self.signature) {
            return Err(TxIntegrityError::BadSignature);
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        self.to_canonical_bytes().len()
    }
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.tx_id);
        self.signer.encode(enc);
        enc.raw(&self.signer_key.0).u64(self.nonce);
        self.payload.encode(enc);
        enc.raw(&self.signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Transaction {
            tx_id: dec.hash()?,
            signer: Address::decode(dec)?,
            signer_key: PublicKey(dec.array()?),
            nonce: dec.u64()?,
            payload: Payload::decode(dec)?,
            signature: Signature(dec.array()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash256,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub miner: Address,
    pub miner_key: PublicKey,
    pub transactions: Vec<Transaction>,
    pub block_hash: Hash256,
    pub miner_signature: Signature,
}

/// Digest over the full encoding of every transaction. The genesis block
/// also commits to the chain parameters here, so a snapshot cannot swap
/// them out.
pub fn transactions_root(height: u64, txs: &[Transaction], params: &ChainParams) -> Hash256 {
    let mut enc = Encoder::new();
    if height == 0 {
        enc.raw(GENESIS_DOMAIN);
        params.encode(&mut enc);
    }
    enc.u32(txs.len() as u32);
    for tx in txs {
        tx.encode(&mut enc);
    }
    Hash256::digest(&enc.into_bytes())
}

pub fn header_hash(
    height: u64,
    prev_hash: &Hash256,
    timestamp: u64,
    miner: &Address,
    miner_key: &PublicKey,
    tx_root: &Hash256,
) -> Hash256 {
    let mut enc = Encoder::new();
    enc.raw(HEADER_DOMAIN)
        .u64(height)
        .hash(prev_hash)
        .u64(timestamp);
    miner.encode(&mut enc);
    enc.raw(&miner_key.0).hash(tx_root);
    Hash256::digest(&enc.into_bytes())
}

impl Block {
    pub fn seal(
        height: u64,
        prev_hash: Hash256,
        timestamp: u64,
        miner: &NodeIdentity,
        transactions: Vec<Transaction>,
        params: &ChainParams,
    ) -> Self {
        let miner_key = miner.public_key();
        let root = transactions_root(height, &transactions, params);
        let block_hash = header_hash(
            height,
            &prev_hash,
            timestamp,
            miner.address(),
            &miner_key,
            &root,
        );
        let miner_signature = miner.sign(block_hash.as_bytes());
        Block {
            height,
            prev_hash,
            timestamp,
            miner: miner.address().clone(),
            miner_key,
            transactions,
            block_hash,
            miner_signature,
        }
    }

    pub fn compute_hash(&self, params: &ChainParams) -> Hash256 {
        let root = transactions_root(self.height, &self.transactions, params);
        header_hash(
            self.height,
            &self.prev_hash,
            self.timestamp,
            &self.miner,
            &self.miner_key,
            &root,
        )
    }

    pub fn signature_valid(&self) -> bool {
        self.miner_key.address() == self.miner
            && self
                .miner_key
                .verify(self.block_hash.as_bytes(), &self.miner_signature)
    }

    pub fn encoded_len(&self) -> usize {
        self.to_canonical_bytes().len()
    }
}

impl Canonical for Block {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height).hash(&self.prev_hash).u64(self.timestamp);
        self.miner.encode(enc);
        enc.raw(&self.miner_key.0).u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            tx.encode(enc);
        }
        enc.hash(&self.block_hash).raw(&self.miner_signature.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let height = dec.u64()?;
        let prev_hash = dec.hash()?;
        let timestamp = dec.u64()?;
        let miner = Address::decode(dec)?;
        let miner_key = PublicKey(dec.array()?);
        let count = dec.u32()? as usize;
        // Each transaction is well over 64 bytes; reject absurd counts
        // before allocating.
        if count > dec.remaining() / 64 {
            return Err(DecodeError::Invalid(format!("{count} transactions cannot fit")));
        }
        let mut transactions = Vec::with_capacity(count);
        for _ in 0..count {
            transactions.push(Transaction::decode(dec)?);
        }
        Ok(Block {
            height,
            prev_hash,
            timestamp,
            miner,
            miner_key,
            transactions,
            block_hash: dec.hash()?,
            miner_signature: Signature(dec.array()?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permissions::Permission;

    fn sample_txs(id: &NodeIdentity) -> Vec<Transaction> {
        let target = NodeIdentity::generate(Some(b"t")).address().clone();
        vec![
            Transaction::new_signed(
                id,
                1,
                Payload::Grant(GrantPayload::flags(target.clone(), [Permission::Connect])),
            ),
            Transaction::new_signed(
                id,
                2,
                Payload::Revoke(GrantPayload::stream_write(target, "s")),
            ),
            Transaction::new_signed(
                id,
                3,
                Payload::StreamCreate {
                    name: "User data-1".into(),
                    open: false,
                },
            ),
            Transaction::new_signed(
                id,
                4,
                Payload::StreamPublish {
                    stream: "User data-1".into(),
                    key: Some("012012".into()),
                    data: vec![1, 2, 3],
                },
            ),
        ]
    }

    #[test]
    fn transactions_verify_and_round_trip() {
        let id = NodeIdentity::generate(Some(b"signer"));
        for tx in sample_txs(&id) {
            tx.verify().unwrap();
            let back = Transaction::from_canonical_bytes(&tx.to_canonical_bytes()).unwrap();
            assert_eq!(back, tx);
        }
    }

    #[test]
    fn tampered_transaction_fails_verification() {
        let id = NodeIdentity::generate(Some(b"signer"));
        let mut tx = sample_txs(&id).pop().unwrap();
        tx.nonce += 1;
        assert_eq!(tx.verify(), Err(TxIntegrityError::IdMismatch));
        let mut tx = sample_txs(&id).pop().unwrap();
        let other = NodeIdentity::generate(Some(b"other"));
        tx.signer_key = other.public_key();
        assert!(tx.verify().is_err());
    }

    #[test]
    fn block_seal_and_round_trip() {
        let id = NodeIdentity::generate(Some(b"miner"));
        let params = ChainParams::default();
        let block = Block::seal(1, Hash256::digest(b"parent"), 5, &id, sample_txs(&id), &params);
        assert_eq!(block.compute_hash(&params), block.block_hash);
        assert!(block.signature_valid());
        let back = Block::from_canonical_bytes(&block.to_canonical_bytes()).unwrap();
        assert_eq!(back, block);
    }

    #[test]
    fn genesis_commits_to_params() {
        let id = NodeIdentity::generate(Some(b"miner"));
        let params = ChainParams::default();
        let genesis = Block::seal(0, Hash256::ZERO, 0, &id, vec![], &params);
        let other = ChainParams {
            anyone_can_mine: true,
            ..params.clone()
        };
        assert_eq!(genesis.compute_hash(&params), genesis.block_hash);
        assert_ne!(genesis.compute_hash(&other), genesis.block_hash);
    }
}
