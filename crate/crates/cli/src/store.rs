//! On-disk layout of a chain directory.
//!
//! ```text
//! <chain-dir>/
//!   params.txt        parameter file the chain was created from
//!   chain.bin         snapshot of the longest chain
//!   state.json        node keys, heights, subscriptions, clock, user keys
//!   repos/<label>.json   each node's enterprise repository
//! ```
//!
//! Every command loads the whole consortium, acts, seals a block if it
//! queued anything, and writes everything back. Stopped nodes keep the
//! height they had when stopped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use consentchain::enterprise::Repository;
use consentchain::ledger::catch_up;
use consentchain::{Address, Chain, Consortium, Node, NodeIdentity};
use serde::{Deserialize, Serialize};

use crate::CliError;

const STATE_FILE: &str = "state.json";
const CHAIN_FILE: &str = "chain.bin";
const PARAMS_FILE: &str = "params.txt";

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    label: String,
    secret: String,
    height: u64,
    running: bool,
    subscriptions: Vec<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StateFile {
    clock_ms: u64,
    nodes: Vec<NodeRecord>,
    users: BTreeMap<String, String>,
}

pub struct Store {
    dir: PathBuf,
    pub consortium: Consortium,
    pub users: BTreeMap<String, NodeIdentity>,
}

fn encode_secret(id: &NodeIdentity) -> String {
    hex::encode(id.secret_bytes())
}

fn decode_secret(hex_text: &str) -> Result<NodeIdentity, CliError> {
    let bytes = hex::decode(hex_text).map_err(|e| CliError::Corrupt(format!("secret key: {e}")))?;
    let bytes: [u8; 64] = bytes
        .try_into()
        .map_err(|_| CliError::Corrupt("secret key has the wrong length".into()))?;
    Ok(NodeIdentity::from_secret_bytes(&bytes))
}

impl Store {
    pub fn exists(dir: &Path) -> bool {
        dir.join(STATE_FILE).is_file()
    }

    pub fn create(dir: &Path, consortium: Consortium, params_text: &str) -> Result<Self, CliError> {
        if Self::exists(dir) {
            return Err(CliError::Usage(format!("{} already holds a chain", dir.display())));
        }
        fs::create_dir_all(dir.join("repos"))?;
        fs::write(dir.join(PARAMS_FILE), params_text)?;
        Ok(Store {
            dir: dir.to_owned(),
            consortium,
            users: BTreeMap::new(),
        })
    }

    pub fn open(dir: &Path) -> Result<Self, CliError> {
        if !Self::exists(dir) {
            return Err(CliError::NoChain(dir.to_owned()));
        }
        let state: StateFile = serde_json::from_slice(&fs::read(dir.join(STATE_FILE))?)?;
        let longest = catch_up(&fs::read(dir.join(CHAIN_FILE))?)?;
        let mut nodes = Vec::with_capacity(state.nodes.len());
        for rec in &state.nodes {
            let chain = if rec.height == longest.height() {
                longest.clone()
            } else {
                let prefix = longest.blocks()[..=rec.height as usize].to_vec();
                Chain::from_blocks(longest.params().clone(), prefix).map_err(|(e, _)| e)?
            };
            let mut node = Node::new(rec.label.clone(), decode_secret(&rec.secret)?, chain);
            for s in &rec.subscriptions {
                // A node that lost receive since subscribing simply stops indexing.
                let _ = node.subscribe(s);
            }
            if !rec.running {
                node.stop();
            }
            nodes.push(node);
        }
        let users = state
            .users
            .iter()
            .map(|(name, secret)| Ok((name.clone(), decode_secret(secret)?)))
            .collect::<Result<_, CliError>>()?;
        Ok(Store {
            dir: dir.to_owned(),
            consortium: Consortium::from_nodes(nodes, state.clock_ms)?,
            users,
        })
    }

    pub fn save(&self) -> Result<(), CliError> {
        let nodes = self.consortium.nodes();
        let longest = nodes
            .iter()
            .max_by_key(|n| n.chain().height())
            .expect("a consortium has a founder");
        let state = StateFile {
            clock_ms: self.consortium.now(),
            nodes: nodes
                .iter()
                .map(|n| NodeRecord {
                    label: n.label().to_owned(),
                    secret: encode_secret(n.identity()),
                    height: n.chain().height(),
                    running: n.is_running(),
                    subscriptions: n
                        .chain()
                        .state()
                        .streams()
                        .filter(|s| n.is_subscribed(&s.name))
                        .map(|s| s.name.clone())
                        .collect(),
                })
                .collect(),
            users: self.users.iter().map(|(k, v)| (k.clone(), encode_secret(v))).collect(),
        };
        write_atomic(&self.dir.join(CHAIN_FILE), &longest.chain().snapshot())?;
        write_atomic(&self.dir.join(STATE_FILE), serde_json::to_string_pretty(&state)?.as_bytes())?;
        Ok(())
    }

    pub fn node(&self, label: Option<&str>) -> Result<&Node, CliError> {
        match label {
            Some(l) => Ok(self.consortium.node(l)?),
            None => Ok(self.consortium.founder()),
        }
    }

    pub fn node_mut(&mut self, label: Option<&str>) -> Result<&mut Node, CliError> {
        let label = label.map_or_else(|| self.consortium.founder().label().to_owned(), str::to_owned);
        Ok(self.consortium.node_mut(&label)?)
    }

    fn repo_path(&self, label: &str) -> PathBuf {
        self.dir.join("repos").join(format!("{label}.json"))
    }

    pub fn repo(&self, label: &str) -> Result<Repository, CliError> {
        Ok(Repository::load(&self.repo_path(label))?)
    }

    pub fn save_repo(&self, label: &str, repo: &Repository) -> Result<(), CliError> {
        Ok(repo.save(&self.repo_path(label))?)
    }

    /// A node label, a user name, or a literal address.
    pub fn resolve(&self, who: &str) -> Result<Address, CliError> {
        if let Ok(n) = self.consortium.node(who) {
            return Ok(n.address().clone());
        }
        if let Some(u) = self.users.get(who) {
            return Ok(u.address().clone());
        }
        Address::parse(who).map_err(|e| CliError::Usage(format!("{who:?} is not a node, user or address ({e})")))
    }

    /// A stored user identity, by name or address.
    pub fn user(&self, who: &str) -> Result<&NodeIdentity, CliError> {
        self.users
            .get(who)
            .or_else(|| self.users.values().find(|u| u.address().as_str() == who))
            .ok_or_else(|| CliError::Usage(format!("no user key {who:?}; create one with `identity user`")))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}
