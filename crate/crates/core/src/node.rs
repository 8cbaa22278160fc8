//! A participant: identity, local chain copy, pending pool and stream
//! subscriptions. [`Consortium`] wires several nodes together in-process
//! with instant delivery; the network simulator adds latency on top.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::crypto::{Address, NodeIdentity};
use crate::hash::Hash256;
use crate::ledger::{
    catch_up, create_chain, Block, CatchUpError, Chain, ChainError, ChainParams, Clock,
    ManualClock, ParamsError, Payload, Transaction, ValidationError,
};
use crate::permissions::{authorize_tx, Denied, GrantPayload, PermissionSet};
use crate::streams::{StreamError, StreamItem, WELL_KNOWN_STREAMS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NodeError {
    #[error("node is not running")]
    Stopped,
    #[error("denied: {0}")]
    Denied(#[from] Denied),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    CatchUp(#[from] CatchUpError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("no node labelled {0:?}")]
    UnknownNode(String),
    #[error("no running node may mine the next block")]
    NoMiner,
}

#[derive(Debug, Clone)]
pub struct Node {
    identity: NodeIdentity,
    label: String,
    chain: Chain,
    pending: Vec<Transaction>,
    pub(crate) subscriptions: BTreeMap<String, Vec<StreamItem>>,
    last_nonce: u64,
    running: bool,
}

impl Node {
    pub fn new(label: impl Into<String>, identity: NodeIdentity, chain: Chain) -> Self {
        Node {
            identity,
            label: label.into(),
            chain,
            pending: Vec::new(),
            subscriptions: BTreeMap::new(),
            last_nonce: 0,
            running: true,
        }
    }

    /// A node whose chain is rebuilt from another node's snapshot.
    pub fn join(
        label: impl Into<String>,
        identity: NodeIdentity,
        snapshot: &[u8],
    ) -> Result<Self, CatchUpError> {
        Ok(Node::new(label, identity, catch_up(snapshot)?))
    }

    pub fn identity(&self) -> &NodeIdentity {
        &self.identity
    }

    pub fn address(&self) -> &Address {
        self.identity.address()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn pending(&self) -> &[Transaction] {
        &self.pending
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    pub fn stop(&mut self) {
        self.running = false;
    }

    pub fn start(&mut self) {
        self.running = true;
    }

    pub(crate) fn ensure_running(&self) -> Result<(), StreamError> {
        if self.running {
            Ok(())
        } else {
            Err(StreamError::Stopped)
        }
    }

    /// Signs `payload` with the next nonce and queues it locally.
    pub(crate) fn submit_payload(&mut self, payload: Payload) -> Transaction {
        let nonce = self.last_nonce.max(self.chain.state().last_nonce(self.address())) + 1;
        self.last_nonce = nonce;
        let tx = Transaction::new_signed(&self.identity, nonce, payload);
        self.pending.push(tx.clone());
        tx
    }

    fn submit_checked(&mut self, payload: Payload) -> Result<Transaction, NodeError> {
        if !self.running {
            return Err(NodeError::Stopped);
        }
        // Check authority against confirmed state before queuing; the final
        // word belongs to the block that includes it.
        let probe = Transaction::new_signed(&self.identity, u64::MAX, payload.clone());
        authorize_tx(self.chain.state(), &probe)?;
        Ok(self.submit_payload(payload))
    }

    pub fn grant(&mut self, target: &Address, flags: PermissionSet) -> Result<Transaction, NodeError> {
        self.submit_checked(Payload::Grant(GrantPayload::flags(target.clone(), flags)))
    }

    pub fn revoke(&mut self, target: &Address, flags: PermissionSet) -> Result<Transaction, NodeError> {
        self.submit_checked(Payload::Revoke(GrantPayload::flags(target.clone(), flags)))
    }

    pub fn grant_stream_write(&mut self, target: &Address, stream: &str) -> Result<Transaction, NodeError> {
        self.submit_checked(Payload::Grant(GrantPayload::stream_write(target.clone(), stream)))
    }

    pub fn revoke_stream_write(&mut self, target: &Address, stream: &str) -> Result<Transaction, NodeError> {
        self.submit_checked(Payload::Revoke(GrantPayload::stream_write(target.clone(), stream)))
    }

    /// Adds a transaction relayed from a peer. Returns false for duplicates
    /// and transactions that fail their own integrity checks.
    pub fn receive_tx(&mut self, tx: Transaction) -> bool {
        if tx.verify().is_err() || self.pending.iter().any(|p| p.tx_id == tx.tx_id) {
            return false;
        }
        self.pending.push(tx);
        true
    }

    /// Mines every pending transaction that still applies, in arrival
    /// order. Transactions that no longer apply are dropped.
    pub fn mine_pending(&mut self, now: u64) -> Result<Block, NodeError> {
        if !self.running {
            return Err(NodeError::Stopped);
        }
        let mut probe = self.chain.state().clone();
        let mut included = Vec::new();
        for tx in std::mem::take(&mut self.pending) {
            if probe.apply_tx(&tx, now).is_ok() {
                included.push(tx);
            }
        }
        match self.chain.append_block(included.clone(), &self.identity, now) {
            Ok(block) => {
                let block = block.clone();
                self.index_block(&block);
                Ok(block)
            }
            Err(e) => {
                self.pending = included;
                Err(e.into())
            }
        }
    }

    /// Validates and appends a block produced elsewhere.
    pub fn accept_block(&mut self, block: Block) -> Result<(), ValidationError> {
        let included: BTreeSet<Hash256> = block.transactions.iter().map(|t| t.tx_id).collect();
        self.chain.accept_block(block.clone())?;
        self.index_block(&block);
        self.pending.retain(|t| !included.contains(&t.tx_id));
        Ok(())
    }

    /// Applies every block the peer chain has beyond ours.
    pub fn sync_from(&mut self, source: &Chain) -> Result<usize, ValidationError> {
        let start = self.chain.height() as usize + 1;
        let mut applied = 0;
        for block in source.blocks().iter().skip(start) {
            self.accept_block(block.clone())?;
            applied += 1;
        }
        Ok(applied)
    }
}

/// Several nodes sharing one logical chain with instant, lossless delivery.
/// Each `seal` gathers every running node's pending transactions, has the
/// node whose turn it is mine them, and hands the block to everyone.
#[derive(Debug)]
pub struct Consortium {
    nodes: Vec<Node>,
    clock: ManualClock,
    block_interval_ms: u64,
}

impl Consortium {
    /// Creates the chain with `founder` as the first node.
    pub fn create(
        params: ChainParams,
        founder_label: &str,
        founder: NodeIdentity,
        start_ms: u64,
    ) -> Result<Self, NodeError> {
        let interval = u64::from(params.target_block_time) * 1_000;
        let chain = create_chain(params, &founder, start_ms)?;
        Ok(Consortium {
            nodes: vec![Node::new(founder_label, founder, chain)],
            clock: ManualClock::new(start_ms),
            block_interval_ms: interval,
        })
    }

    /// Reassembles a consortium from nodes restored elsewhere, e.g. from
    /// disk. The founder comes first; the clock resumes at `now_ms`.
    pub fn from_nodes(nodes: Vec<Node>, now_ms: u64) -> Result<Self, NodeError> {
        let founder = nodes.first().ok_or(NodeError::NoMiner)?;
        let interval = u64::from(founder.chain().params().target_block_time) * 1_000;
        Ok(Consortium {
            nodes,
            clock: ManualClock::new(now_ms),
            block_interval_ms: interval,
        })
    }

    /// Founder creates the `pubkeys`, `items`, `access` and `consent`
    /// streams in one block.
    pub fn bootstrap_sharing(&mut self) -> Result<Block, NodeError> {
        for name in WELL_KNOWN_STREAMS {
            self.nodes[0].create_stream(name, true)?;
        }
        self.seal()
    }

    /// Adds a node that catches up from the founder's snapshot.
    pub fn add_node(&mut self, label: &str, identity: NodeIdentity) -> Result<&mut Node, NodeError> {
        let snapshot = self.nodes[0].chain().snapshot();
        self.nodes.push(Node::join(label, identity, &snapshot)?);
        Ok(self.nodes.last_mut().expect("just pushed"))
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn founder(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, label: &str) -> Result<&Node, NodeError> {
        self.nodes
            .iter()
            .find(|n| n.label == label)
            .ok_or_else(|| NodeError::UnknownNode(label.to_owned()))
    }

    pub fn node_mut(&mut self, label: &str) -> Result<&mut Node, NodeError> {
        self.nodes
            .iter_mut()
            .find(|n| n.label == label)
            .ok_or_else(|| NodeError::UnknownNode(label.to_owned()))
    }

    pub fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Mines one block containing everything pending on running nodes.
    pub fn seal(&mut self) -> Result<Block, NodeError> {
        let now = self.clock.advance(self.block_interval_ms);
        let miner_idx = self.miner_index()?;
        let relayed: Vec<Transaction> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| *i != miner_idx && n.running)
            .flat_map(|(_, n)| n.pending.iter().cloned())
            .collect();
        for tx in relayed {
            self.nodes[miner_idx].receive_tx(tx);
        }
        let block = self.nodes[miner_idx].mine_pending(now)?;
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if i != miner_idx && node.running {
                node.accept_block(block.clone())?;
            }
        }
        Ok(block)
    }

    fn miner_index(&self) -> Result<usize, NodeError> {
        let chain = self.nodes[0].chain();
        let candidates: Vec<usize> = match chain.next_miner() {
            Some(expected) => self
                .nodes
                .iter()
                .position(|n| n.address() == expected)
                .into_iter()
                .collect(),
            None => (0..self.nodes.len()).collect(),
        };
        candidates
            .into_iter()
            .find(|&i| {
                let n = &self.nodes[i];
                n.running
                    && n.chain()
                        .state()
                        .permissions()
                        .check_permission(n.address(), crate::permissions::Permission::Mine)
            })
            .ok_or(NodeError::NoMiner)
    }

    pub fn stop(&mut self, label: &str) -> Result<(), NodeError> {
        self.node_mut(label)?.stop();
        Ok(())
    }

    /// Restarts a node and brings its chain up to the longest peer chain.
    pub fn restart(&mut self, label: &str) -> Result<usize, NodeError> {
        let source = self
            .nodes
            .iter()
            .filter(|n| n.running)
            .max_by_key(|n| n.chain().height())
            .map(|n| n.chain().clone());
        let node = self.node_mut(label)?;
        node.start();
        match source {
            Some(chain) => Ok(node.sync_from(&chain)?),
            None => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permissions::Permission;

    fn consortium() -> Consortium {
        let founder = NodeIdentity::generate(Some(b"hotel"));
        Consortium::create(ChainParams::default(), "hotel", founder, 1_000).unwrap()
    }

    #[test]
    fn grants_confer_nothing_until_confirmed() {
        let mut c = consortium();
        let travel = NodeIdentity::generate(Some(b"travel"));
        let addr = travel.address().clone();
        c.add_node("travel", travel).unwrap();
        c.node_mut("hotel")
            .unwrap()
            .grant(&addr, PermissionSet::from([Permission::Send]))
            .unwrap();
        assert!(!c
            .node("travel")
            .unwrap()
            .chain()
            .state()
            .permissions()
            .check_permission(&addr, Permission::Send));
        c.seal().unwrap();
        for n in c.nodes() {
            assert!(n.chain().state().permissions().check_permission(&addr, Permission::Send));
        }
    }

    #[test]
    fn unauthorized_grant_is_refused_before_queuing() {
        let mut c = consortium();
        let travel = NodeIdentity::generate(Some(b"travel"));
        c.add_node("travel", travel).unwrap();
        let hotel = c.founder().address().clone();
        let err = c
            .node_mut("travel")
            .unwrap()
            .grant(&hotel, PermissionSet::from([Permission::Mine]))
            .unwrap_err();
        assert_eq!(err, NodeError::Denied(Denied::NotAuthorized(Permission::Mine)));
        assert!(c.node("travel").unwrap().pending().is_empty());
    }

    #[test]
    fn stopped_node_catches_up_on_restart() {
        let mut c = consortium();
        let travel = NodeIdentity::generate(Some(b"travel"));
        c.add_node("travel", travel).unwrap();
        c.stop("travel").unwrap();
        c.seal().unwrap();
        c.seal().unwrap();
        assert_eq!(c.node("travel").unwrap().chain().height(), 0);
        assert_eq!(c.restart("travel").unwrap(), 2);
        assert_eq!(
            c.node("travel").unwrap().chain().state_hash(),
            c.founder().chain().state_hash()
        );
    }
}
