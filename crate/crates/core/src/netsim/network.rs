use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{NodeIdentity, PublicIdentity, Signature};
use crate::ledger::{create_chain, Block, ChainParams, Transaction};
use crate::node::{Node, NodeError};
use crate::permissions::{Permission, PermissionSet};

use super::latency::LatencyModel;

const CHALLENGE_DOMAIN: &[u8] = b"consentchain/handshake/v1";
/// Virtual wall-clock origin for block timestamps.
pub const EPOCH_MS: u64 = 1_560_000_000_000;
/// Unanswered handshake legs abort after this many maximum link delays.
pub const TIMEOUT_FACTOR: u64 = 10;
pub const HANDSHAKE_LEGS: u32 = 4;
const DEFAULT_PORT: u16 = 7447;

/// How a simulated node misbehaves, if at all.
#[derive(Debug, Clone)]
pub enum Behavior {
    Honest,
    /// Presents its real identity but signs challenges with another key.
    WrongKey(NodeIdentity),
}

#[derive(Debug, Clone)]
pub struct SimNode {
    pub node: Node,
    pub host: String,
    pub port: u16,
    pub behavior: Behavior,
    peers: BTreeSet<usize>,
}

impl SimNode {
    /// `<chain>@<host>:<port>`, the form nodes use to reach each other.
    pub fn endpoint(&self) -> String {
        format!("{}@{}:{}", self.node.chain().params().chain_name, self.host, self.port)
    }

    pub fn peers(&self) -> &BTreeSet<usize> {
        &self.peers
    }

    fn sign_challenge(&self, challenge: &[u8; 32]) -> Signature {
        let msg = challenge_message(challenge);
        match &self.behavior {
            Behavior::Honest => self.node.identity().sign(&msg),
            Behavior::WrongKey(other) => other.sign(&msg),
        }
    }
}

fn challenge_message(challenge: &[u8; 32]) -> Vec<u8> {
    [CHALLENGE_DOMAIN, challenge.as_slice()].concat()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    NotPermitted,
    BadSignature,
    Timeout,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbortReason::NotPermitted => "not-permitted",
            AbortReason::BadSignature => "bad-signature",
            AbortReason::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Connected,
    Aborted { step: u8, reason: AbortReason },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HandshakeResult {
    pub initiator: usize,
    pub responder: usize,
    pub outcome: Outcome,
    /// Sum of the delays of every handshake message delivered.
    pub round_trip_ms: f64,
    pub legs: u32,
}

impl HandshakeResult {
    pub fn is_connected(&self) -> bool {
        self.outcome == Outcome::Connected
    }

    /// Mean one-way delay per handshake message: the figure reported as a
    /// peer's latency.
    pub fn latency_ms(&self) -> f64 {
        if self.legs == 0 {
            0.0
        } else {
            self.round_trip_ms / f64::from(self.legs)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("no node with index {0}")]
    UnknownNode(usize),
    #[error("node {0} is not running")]
    NotRunning(usize),
    #[error("node {0} has no peers to reconnect to")]
    NoPeers(usize),
    #[error("handshake {}->{} aborted at step {step}: {reason}", .result.initiator, .result.responder)]
    Aborted {
        step: u8,
        reason: AbortReason,
        result: HandshakeResult,
    },
    #[error(transparent)]
    Node(#[from] NodeError),
}

#[derive(Debug, Clone)]
enum Message {
    Hello {
        hs: u64,
        identity: PublicIdentity,
    },
    HelloAck {
        hs: u64,
        identity: PublicIdentity,
        challenge: [u8; 32],
    },
    Proof {
        hs: u64,
        signature: Signature,
        challenge: [u8; 32],
    },
    ProofAck {
        hs: u64,
        signature: Signature,
    },
    Tx(Transaction),
    Block(Block),
    SyncRequest {
        from_height: u64,
    },
    SyncBlocks(Vec<Block>),
}

impl Message {
    fn label(&self) -> String {
        match self {
            Message::Hello { hs, .. } => format!("hello hs={hs}"),
            Message::HelloAck { hs, .. } => format!("hello-ack hs={hs}"),
            Message::Proof { hs, .. } => format!("proof hs={hs}"),
            Message::ProofAck { hs, .. } => format!("proof-ack hs={hs}"),
            Message::Tx(tx) => format!("tx {}", &tx.tx_id.to_hex()[..12]),
            Message::Block(b) => format!("block h={}", b.height),
            Message::SyncRequest { from_height } => format!("sync-request from={from_height}"),
            Message::SyncBlocks(blocks) => format!("sync-blocks n={}", blocks.len()),
        }
    }

    fn handshake_leg(&self) -> Option<(u64, u8)> {
        match self {
            Message::Hello { hs, .. } => Some((*hs, 1)),
            Message::HelloAck { hs, .. } => Some((*hs, 2)),
            Message::Proof { hs, .. } => Some((*hs, 3)),
            Message::ProofAck { hs, .. } => Some((*hs, 4)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Event {
    Deliver {
        from: usize,
        to: usize,
        delay_us: u64,
        msg: Message,
    },
    Timeout {
        hs: u64,
        leg: u8,
    },
}

#[derive(Debug, Clone)]
struct Handshake {
    a: usize,
    b: usize,
    legs_done: u32,
    elapsed_us: u64,
    a_identity: Option<PublicIdentity>,
    challenge_a: [u8; 32],
    challenge_b: [u8; 32],
    result: Option<HandshakeResult>,
}

/// Several nodes joined by latency-modelled links, driven by a single
/// discrete-event loop with a virtual microsecond clock.
#[derive(Debug)]
pub struct SimNetwork {
    nodes: Vec<SimNode>,
    default_link: LatencyModel,
    links: BTreeMap<(usize, usize), LatencyModel>,
    clock_us: u64,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    events: BTreeMap<u64, Event>,
    seq: u64,
    handshakes: BTreeMap<u64, Handshake>,
    next_hs: u64,
    trace: Vec<String>,
}

impl SimNetwork {
    /// Founder (node 0) creates the chain and, in one block, grants node `i`
    /// the flags `permissions[i]`; the others then join from its snapshot.
    /// The founder keeps admin and mine regardless of `permissions[0]` so
    /// the chain can still grow.
    pub fn build(
        params: ChainParams,
        permissions: &[PermissionSet],
        link: LatencyModel,
        seed: u64,
    ) -> Result<Self, NetError> {
        let identities: Vec<NodeIdentity> = (0..permissions.len())
            .map(|i| NodeIdentity::generate(Some(format!("sim-{seed}-node-{i}").as_bytes())))
            .collect();
        let chain = create_chain(params, &identities[0], EPOCH_MS).map_err(NodeError::from)?;
        let mut founder = Node::new("n0", identities[0].clone(), chain);
        for (i, id) in identities.iter().enumerate().skip(1) {
            if !permissions[i].is_empty() {
                founder.grant(id.address(), permissions[i])?;
            }
        }
        let keep = PermissionSet::from([Permission::Admin, Permission::Mine]);
        let drop = PermissionSet::ALL.difference(permissions[0].union(keep));
        if !drop.is_empty() {
            founder.revoke(&identities[0].address().clone(), drop)?;
        }
        if !founder.pending().is_empty() {
            founder.mine_pending(EPOCH_MS)?;
        }
        let snapshot = founder.chain().snapshot();
        let mut nodes = vec![founder];
        for (i, id) in identities.into_iter().enumerate().skip(1) {
            let node = Node::join(format!("n{i}"), id, &snapshot).map_err(NodeError::from)?;
            nodes.push(node);
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, node)| SimNode {
                node,
                host: format!("10.0.0.{}", i + 1),
                port: DEFAULT_PORT,
                behavior: Behavior::Honest,
                peers: BTreeSet::new(),
            })
            .collect();
        Ok(SimNetwork {
            nodes,
            default_link: link,
            links: BTreeMap::new(),
            clock_us: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            queue: BinaryHeap::new(),
            events: BTreeMap::new(),
            seq: 0,
            handshakes: BTreeMap::new(),
            next_hs: 0,
            trace: Vec::new(),
        })
    }

    /// `n` nodes, every non-founder holding connect, send and receive.
    pub fn consortium(n: usize, link: LatencyModel, seed: u64) -> Result<Self, NetError> {
        let member = PermissionSet::from([Permission::Connect, Permission::Send, Permission::Receive]);
        let mut perms = vec![member; n.max(1)];
        perms[0] = PermissionSet::ALL;
        Self::build(ChainParams::default(), &perms, link, seed)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &SimNode {
        &self.nodes[i]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut SimNode {
        &mut self.nodes[i]
    }

    pub fn set_behavior(&mut self, i: usize, behavior: Behavior) {
        self.nodes[i].behavior = behavior;
    }

    pub fn set_link(&mut self, a: usize, b: usize, model: LatencyModel) {
        self.links.insert((a.min(b), a.max(b)), model);
    }

    pub fn link(&self, a: usize, b: usize) -> LatencyModel {
        self.links
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(self.default_link)
    }

    pub fn now_us(&self) -> u64 {
        self.clock_us
    }

    pub fn now_ms(&self) -> u64 {
        EPOCH_MS + self.clock_us / 1_000
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    /// Line-delimited event trace.
    pub fn trace_text(&self) -> String {
        let mut out = self.trace.join("\n");
        out.push('\n');
        out
    }

    fn record(&mut self, line: String) {
        self.trace.push(format!("{:>12} {line}", self.clock_us));
    }

    fn schedule(&mut self, at_us: u64, event: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.events.insert(seq, event);
        self.queue.push(Reverse((at_us, seq)));
    }

    fn send(&mut self, from: usize, to: usize, msg: Message) {
        let model = self.link(from, to);
        let delay_us = model.sample_us(&mut self.rng);
        if let Some((hs, leg)) = msg.handshake_leg() {
            let (_, max_us) = model.bounds_us();
            let timeout = self.clock_us + TIMEOUT_FACTOR * max_us.max(1);
            self.schedule(timeout, Event::Timeout { hs, leg });
        }
        self.record(format!("send n{from}->n{to} {} delay_us={delay_us}", msg.label()));
        self.schedule(
            self.clock_us + delay_us,
            Event::Deliver {
                from,
                to,
                delay_us,
                msg,
            },
        );
    }

    fn broadcast(&mut self, from: usize, except: Option<usize>, msg: Message) {
        let peers: Vec<usize> = self.nodes[from]
            .peers
            .iter()
            .copied()
            .filter(|p| Some(*p) != except)
            .collect();
        for p in peers {
            self.send(from, p, msg.clone());
        }
    }

    /// Processes the next event; false when the queue is empty.
    fn step(&mut self) -> bool {
        let Some(Reverse((at, seq))) = self.queue.pop() else {
            return false;
        };
        let event = self.events.remove(&seq).expect("queued events are stored");
        match event {
            Event::Timeout { hs, leg } => {
                let hs_state = &self.handshakes[&hs];
                if hs_state.result.is_none() && hs_state.legs_done < u32::from(leg) {
                    self.clock_us = self.clock_us.max(at);
                    self.finish(hs, Outcome::Aborted {
                        step: leg,
                        reason: AbortReason::Timeout,
                    });
                }
            }
            Event::Deliver {
                from,
                to,
                delay_us,
                msg,
            } => {
                self.clock_us = self.clock_us.max(at);
                if !self.nodes[to].node.is_running() {
                    self.record(format!("drop n{from}->n{to} {} (stopped)", msg.label()));
                    return true;
                }
                self.record(format!("recv n{from}->n{to} {}", msg.label()));
                self.deliver(from, to, delay_us, msg);
            }
        }
        true
    }

    pub fn run_until_idle(&mut self) {
        while self.step() {}
    }

    /// Processes events due up to `t_us`, then moves the clock there.
    pub fn run_until(&mut self, t_us: u64) {
        while let Some(Reverse((at, _))) = self.queue.peek() {
            if *at > t_us {
                break;
            }
            self.step();
        }
        self.clock_us = self.clock_us.max(t_us);
    }

    fn finish(&mut self, hs: u64, outcome: Outcome) {
        let state = self.handshakes.get_mut(&hs).expect("known handshake");
        if state.result.is_some() {
            return;
        }
        let result = HandshakeResult {
            initiator: state.a,
            responder: state.b,
            outcome,
            round_trip_ms: state.elapsed_us as f64 / 1_000.0,
            legs: state.legs_done,
        };
        state.result = Some(result);
        let (a, b) = (state.a, state.b);
        match outcome {
            Outcome::Connected => {
                self.nodes[a].peers.insert(b);
                self.nodes[b].peers.insert(a);
                self.record(format!("connected n{a}<->n{b}"));
                self.start_sync(a, b);
            }
            Outcome::Aborted { step, reason } => {
                self.record(format!("aborted n{a}->n{b} step={step} reason={reason}"));
            }
        }
    }

    /// The side that is behind asks the other for the missing blocks.
    fn start_sync(&mut self, a: usize, b: usize) {
        let ha = self.nodes[a].node.chain().height();
        let hb = self.nodes[b].node.chain().height();
        if ha < hb {
            self.send(a, b, Message::SyncRequest { from_height: ha + 1 });
        } else if hb < ha {
            self.send(b, a, Message::SyncRequest { from_height: hb + 1 });
        }
    }

    fn permits(&self, at: usize, identity: &PublicIdentity) -> bool {
        self.nodes[at]
            .node
            .chain()
            .state()
            .permissions()
            .check_permission(&identity.address(), Permission::Connect)
    }

    fn deliver(&mut self, from: usize, to: usize, delay_us: u64, msg: Message) {
        if let Some((hs, leg)) = msg.handshake_leg() {
            let state = self.handshakes.get_mut(&hs).expect("known handshake");
            if state.result.is_some() || state.legs_done + 1 != u32::from(leg) {
                return;
            }
            state.legs_done += 1;
            state.elapsed_us += delay_us;
        }
        match msg {
            Message::Hello { hs, identity } => {
                if !self.permits(to, &identity) {
                    return self.finish(hs, Outcome::Aborted {
                        step: 2,
                        reason: AbortReason::NotPermitted,
                    });
                }
                let mut challenge = [0u8; 32];
                self.rng.fill_bytes(&mut challenge);
                let state = self.handshakes.get_mut(&hs).expect("known handshake");
                state.a_identity = Some(identity);
                state.challenge_b = challenge;
                let identity = self.nodes[to].node.identity().public_identity();
                self.send(to, from, Message::HelloAck {
                    hs,
                    identity,
                    challenge,
                });
            }
            Message::HelloAck {
                hs,
                identity,
                challenge,
            } => {
                if !self.permits(to, &identity) {
                    return self.finish(hs, Outcome::Aborted {
                        step: 2,
                        reason: AbortReason::NotPermitted,
                    });
                }
                let mut own = [0u8; 32];
                self.rng.fill_bytes(&mut own);
                self.handshakes.get_mut(&hs).expect("known handshake").challenge_a = own;
                let signature = self.nodes[to].sign_challenge(&challenge);
                self.send(to, from, Message::Proof {
                    hs,
                    signature,
                    challenge: own,
                });
            }
            Message::Proof {
                hs,
                signature,
                challenge,
            } => {
                let state = &self.handshakes[&hs];
                let key = state.a_identity.expect("set at hello").sign_key;
                if !key.verify(&challenge_message(&state.challenge_b), &signature) {
                    return self.finish(hs, Outcome::Aborted {
                        step: 4,
                        reason: AbortReason::BadSignature,
                    });
                }
                let signature = self.nodes[to].sign_challenge(&challenge);
                self.send(to, from, Message::ProofAck { hs, signature });
            }
            Message::ProofAck { hs, signature } => {
                let state = &self.handshakes[&hs];
                let key = self.nodes[state.b].node.identity().public_key();
                let outcome = if key.verify(&challenge_message(&state.challenge_a), &signature) {
                    Outcome::Connected
                } else {
                    Outcome::Aborted {
                        step: 4,
                        reason: AbortReason::BadSignature,
                    }
                };
                self.finish(hs, outcome);
            }
            Message::Tx(tx) => {
                if self.nodes[to].node.receive_tx(tx.clone()) {
                    self.broadcast(to, Some(from), Message::Tx(tx));
                }
            }
            Message::Block(block) => {
                let local = self.nodes[to].node.chain().height();
                if block.height == local + 1 {
                    match self.nodes[to].node.accept_block(block.clone()) {
                        Ok(()) => self.broadcast(to, Some(from), Message::Block(block)),
                        Err(e) => self.record(format!("reject n{to} block h={}: {e}", block.height)),
                    }
                } else if block.height > local + 1 {
                    self.send(to, from, Message::SyncRequest {
                        from_height: local + 1,
                    });
                }
            }
            Message::SyncRequest { from_height } => {
                let blocks: Vec<Block> = self.nodes[to]
                    .node
                    .chain()
                    .blocks()
                    .iter()
                    .skip(from_height as usize)
                    .cloned()
                    .collect();
                if !blocks.is_empty() {
                    self.send(to, from, Message::SyncBlocks(blocks));
                }
            }
            Message::SyncBlocks(blocks) => {
                let mut tip = None;
                for block in blocks {
                    if block.height != self.nodes[to].node.chain().height() + 1 {
                        continue;
                    }
                    if let Err(e) = self.nodes[to].node.accept_block(block.clone()) {
                        self.record(format!("reject n{to} block h={}: {e}", block.height));
                        break;
                    }
                    tip = Some(block);
                }
                if let Some(block) = tip {
                    self.broadcast(to, Some(from), Message::Block(block));
                }
            }
        }
    }

    fn check_node(&self, i: usize) -> Result<(), NetError> {
        match self.nodes.get(i) {
            None => Err(NetError::UnknownNode(i)),
            Some(n) if !n.node.is_running() => Err(NetError::NotRunning(i)),
            Some(_) => Ok(()),
        }
    }

    fn begin_handshake(&mut self, a: usize, b: usize) -> u64 {
        let hs = self.next_hs;
        self.next_hs += 1;
        self.handshakes.insert(hs, Handshake {
            a,
            b,
            legs_done: 0,
            elapsed_us: 0,
            a_identity: None,
            challenge_a: [0; 32],
            challenge_b: [0; 32],
            result: None,
        });
        self.record(format!("handshake hs={hs} n{a}->n{b}"));
        let identity = self.nodes[a].node.identity().public_identity();
        self.send(a, b, Message::Hello { hs, identity });
        hs
    }

    /// Runs handshakes from `a` to each target concurrently and returns the
    /// results in target order. Follow-up sync traffic is left queued.
    pub fn connect_many(&mut self, a: usize, targets: &[usize]) -> Result<Vec<HandshakeResult>, NetError> {
        self.check_node(a)?;
        for &b in targets {
            if b >= self.nodes.len() {
                return Err(NetError::UnknownNode(b));
            }
        }
        let ids: Vec<u64> = targets.iter().map(|&b| self.begin_handshake(a, b)).collect();
        while ids.iter().any(|id| self.handshakes[id].result.is_none()) {
            if !self.step() {
                break;
            }
        }
        Ok(ids
            .iter()
            .map(|id| self.handshakes[id].result.clone().expect("timeouts resolve every handshake"))
            .collect())
    }

    /// Four-step mutual handshake from `a` to `b`.
    pub fn connect(&mut self, a: usize, b: usize) -> Result<HandshakeResult, NetError> {
        Ok(self.connect_many(a, &[b])?.remove(0))
    }

    pub fn disconnect(&mut self, a: usize, b: usize) {
        self.nodes[a].peers.remove(&b);
        self.nodes[b].peers.remove(&a);
        self.record(format!("disconnect n{a}<->n{b}"));
    }

    /// Halts a node: it drops all peers and ignores traffic until started.
    pub fn stop(&mut self, i: usize) {
        let peers: Vec<usize> = self.nodes[i].peers.iter().copied().collect();
        for p in peers {
            self.nodes[p].peers.remove(&i);
        }
        self.nodes[i].peers.clear();
        self.nodes[i].node.stop();
        self.record(format!("stop n{i}"));
    }

    pub fn start(&mut self, i: usize) {
        self.nodes[i].node.start();
        self.record(format!("start n{i}"));
    }

    /// Relays every pending transaction of node `i` to its peers.
    pub fn flush_pending(&mut self, i: usize) {
        let txs: Vec<Transaction> = self.nodes[i].node.pending().to_vec();
        for tx in txs {
            self.broadcast(i, None, Message::Tx(tx));
        }
    }

    /// Node `i` mines its pending pool and announces the block to peers.
    pub fn mine(&mut self, i: usize) -> Result<Block, NetError> {
        self.check_node(i)?;
        let now = self.now_ms().max(self.nodes[i].node.chain().tip().timestamp);
        let block = self.nodes[i].node.mine_pending(now)?;
        self.record(format!("mined n{i} h={} txs={}", block.height, block.transactions.len()));
        self.broadcast(i, None, Message::Block(block.clone()));
        Ok(block)
    }

    /// Stops node `i`, lets `gap_ms` of virtual time pass, restarts it and
    /// reconnects to every former peer. The observation is the mean
    /// per-target latency.
    pub fn stop_start_cycle(&mut self, i: usize, gap_ms: u64) -> Result<CycleResult, NetError> {
        self.check_node(i)?;
        let former: Vec<usize> = self.nodes[i].peers.iter().copied().collect();
        if former.is_empty() {
            return Err(NetError::NoPeers(i));
        }
        self.stop(i);
        self.run_until(self.clock_us + gap_ms * 1_000);
        self.start(i);
        let results = self.connect_many(i, &former)?;
        if let Some(bad) = results.iter().find(|r| !r.is_connected()) {
            if let Outcome::Aborted { step, reason } = bad.outcome {
                return Err(NetError::Aborted {
                    step,
                    reason,
                    result: bad.clone(),
                });
            }
        }
        self.run_until_idle();
        let sample_ms = results.iter().map(HandshakeResult::latency_ms).sum::<f64>() / results.len() as f64;
        Ok(CycleResult { results, sample_ms })
    }

    /// True when every running node holds the same state hash.
    pub fn converged(&self) -> bool {
        let mut hashes = self
            .nodes
            .iter()
            .filter(|n| n.node.is_running())
            .map(|n| n.node.chain().state_hash());
        match hashes.next() {
            Some(first) => hashes.all(|h| h == first),
            None => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleResult {
    pub results: Vec<HandshakeResult>,
    pub sample_ms: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(n: usize) -> SimNetwork {
        SimNetwork::consortium(n, LatencyModel::fixed(100.0), 7).unwrap()
    }

    #[test]
    fn honest_permitted_nodes_connect() {
        let mut net = net(2);
        let r = net.connect(0, 1).unwrap();
        assert_eq!(r.outcome, Outcome::Connected);
        assert_eq!(r.legs, HANDSHAKE_LEGS);
        assert_eq!(r.round_trip_ms, 400.0);
        assert_eq!(r.latency_ms(), 100.0);
        assert!(net.node(0).peers().contains(&1));
    }

    #[test]
    fn unpermitted_responder_aborts_at_step_two() {
        let member = PermissionSet::from([Permission::Send]);
        let mut net = SimNetwork::build(
            ChainParams::default(),
            &[PermissionSet::ALL, member],
            LatencyModel::fixed(10.0),
            1,
        )
        .unwrap();
        let r = net.connect(0, 1).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::Aborted {
                step: 2,
                reason: AbortReason::NotPermitted
            }
        );
        assert!(net.node(0).peers().is_empty());
    }

    #[test]
    fn wrong_key_aborts_at_step_four() {
        let mut net = net(2);
        net.set_behavior(1, Behavior::WrongKey(NodeIdentity::generate(Some(b"imposter"))));
        let r = net.connect(0, 1).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::Aborted {
                step: 4,
                reason: AbortReason::BadSignature
            }
        );
    }

    #[test]
    fn stopped_peer_times_out() {
        let mut net = net(2);
        net.node_mut(1).node.stop();
        let r = net.connect(0, 1).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::Aborted {
                step: 1,
                reason: AbortReason::Timeout
            }
        );
        assert_eq!(net.now_us(), 1_000_000);
    }

    #[test]
    fn endpoint_format() {
        let net = net(2);
        assert_eq!(net.node(1).endpoint(), "model@10.0.0.2:7447");
    }

    #[test]
    fn blocks_propagate_through_a_star() {
        let mut net = net(4);
        for b in 1..4 {
            assert!(net.connect(0, b).unwrap().is_connected());
        }
        net.run_until_idle();
        for _ in 0..3 {
            net.mine(0).unwrap();
            net.run_until_idle();
        }
        assert!(net.converged());
        assert_eq!(net.node(3).node.chain().height(), net.node(0).node.chain().height());
    }

    #[test]
    fn cycle_with_zero_gap_reconnects() {
        let mut net = net(3);
        net.connect_many(0, &[1, 2]).unwrap();
        net.run_until_idle();
        let c = net.stop_start_cycle(0, 0).unwrap();
        assert_eq!(c.results.len(), 2);
        assert_eq!(c.sample_ms, 100.0);
    }
}
