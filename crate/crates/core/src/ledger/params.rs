//! Chain parameters and the `key = value` parameter file.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, DecodeError, Decoder, Encoder};
use crate::permissions::{Permission, PermissionSet};

pub const TARGET_BLOCK_TIME_RANGE: (u32, u32) = (5, 86_400);
pub const MAX_BLOCK_SIZE_RANGE: (u64, u64) = (1_000, 1_000_000_000);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamsError {
    #[error("invalid parameter {field}: {reason}")]
    InvalidParams { field: &'static str, reason: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown parameter {key:?}")]
    UnknownKey { line: usize, key: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainParams {
    pub chain_name: String,
    pub description: String,
    pub protocol_tag: String,
    pub root_stream_name: String,
    pub root_stream_open: bool,
    pub chain_is_testnet: bool,
    /// Seconds.
    pub target_block_time: u32,
    /// Bytes.
    pub max_block_size: u64,
    pub anyone_can_connect: bool,
    pub anyone_can_send: bool,
    pub anyone_can_receive: bool,
    pub anyone_can_receive_empty: bool,
    pub anyone_can_create: bool,
    pub anyone_can_issue: bool,
    pub anyone_can_mine: bool,
    pub anyone_can_activate: bool,
    pub anyone_can_admin: bool,
    /// Parsed and stored; has no effect on block production or validation.
    pub miner_precheck: bool,
}

impl Default for ChainParams {
    /// The private-consortium settings: nothing is open to unknown
    /// addresses except receiving empty outputs.
    fn default() -> Self {
        ChainParams {
            chain_name: "model".into(),
            description: "MultiChain model".into(),
            protocol_tag: "multichain".into(),
            root_stream_name: "root".into(),
            root_stream_open: true,
            chain_is_testnet: false,
            target_block_time: 15,
            max_block_size: 8_388_608,
            anyone_can_connect: false,
            anyone_can_send: false,
            anyone_can_receive: false,
            anyone_can_receive_empty: true,
            anyone_can_create: false,
            anyone_can_issue: false,
            anyone_can_mine: false,
            anyone_can_activate: false,
            anyone_can_admin: false,
            miner_precheck: true,
        }
    }
}

enum Value<'a> {
    Text(&'a mut String),
    Flag(&'a mut bool),
    U32(&'a mut u32),
    U64(&'a mut u64),
}

impl ChainParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let (lo, hi) = TARGET_BLOCK_TIME_RANGE;
        if !(lo..=hi).contains(&self.target_block_time) {
            return Err(ParamsError::InvalidParams {
                field: "target-block-time",
                reason: format!("{} outside {lo}..={hi}", self.target_block_time),
            });
        }
        let (lo, hi) = MAX_BLOCK_SIZE_RANGE;
        if !(lo..=hi).contains(&self.max_block_size) {
            return Err(ParamsError::InvalidParams {
                field: "maximum-block-size",
                reason: format!("{} outside {lo}..={hi}", self.max_block_size),
            });
        }
        if self.chain_name.trim().is_empty() {
            return Err(ParamsError::InvalidParams {
                field: "chain-name",
                reason: "must not be empty".into(),
            });
        }
        if self.root_stream_name.trim().is_empty() {
            return Err(ParamsError::InvalidParams {
                field: "root-stream-name",
                reason: "must not be empty".into(),
            });
        }
        Ok(())
    }

    /// Global defaults for addresses without explicit grants.
    pub fn default_permissions(&self) -> PermissionSet {
        let mut set = PermissionSet::EMPTY;
        for (flag, on) in [
            (Permission::Connect, self.anyone_can_connect),
            (Permission::Send, self.anyone_can_send),
            (Permission::Receive, self.anyone_can_receive),
            (Permission::Issue, self.anyone_can_issue),
            (Permission::Create, self.anyone_can_create),
            (Permission::Mine, self.anyone_can_mine),
            (Permission::Admin, self.anyone_can_admin),
            (Permission::Activate, self.anyone_can_activate),
        ] {
            if on {
                set.insert(flag);
            }
        }
        set
    }

    fn fields(&mut self) -> Vec<(&'static str, Value<'_>)> {
        vec![
            ("chain-name", Value::Text(&mut self.chain_name)),
            ("chain-protocol", Value::Text(&mut self.protocol_tag)),
            ("chain-description", Value::Text(&mut self.description)),
            ("root-stream-name", Value::Text(&mut self.root_stream_name)),
            ("root-stream-open", Value::Flag(&mut self.root_stream_open)),
            ("chain-is-testnet", Value::Flag(&mut self.chain_is_testnet)),
            ("target-block-time", Value::U32(&mut self.target_block_time)),
            ("maximum-block-size", Value::U64(&mut self.max_block_size)),
            ("anyone-can-connect", Value::Flag(&mut self.anyone_can_connect)),
            ("anyone-can-send", Value::Flag(&mut self.anyone_can_send)),
            ("anyone-can-receive", Value::Flag(&mut self.anyone_can_receive)),
            (
                "anyone-can-receive-empty",
                Value::Flag(&mut self.anyone_can_receive_empty),
            ),
            ("anyone-can-create", Value::Flag(&mut self.anyone_can_create)),
            ("anyone-can-issue", Value::Flag(&mut self.anyone_can_issue)),
            ("anyone-can-mine", Value::Flag(&mut self.anyone_can_mine)),
            ("anyone-can-activate", Value::Flag(&mut self.anyone_can_activate)),
            ("anyone-can-admin", Value::Flag(&mut self.anyone_can_admin)),
            (
                "support-miner-precheck",
                Value::Flag(&mut self.miner_precheck),
            ),
        ]
    }

    /// Parses a parameter file. Keys not present keep their default value;
    /// `#` starts a comment that runs to the end of the line.
    pub fn parse(text: &str) -> Result<Self, ParamsError> {
        let mut params = ChainParams::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ParamsError::Syntax {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let mut fields = params.fields();
            let slot = fields
                .iter_mut()
                .find(|(name, _)| *name == key)
                .map(|(_, v)| v)
                .ok_or_else(|| ParamsError::UnknownKey {
                    line,
                    key: key.to_owned(),
                })?;
            let bad = |what: &str| ParamsError::Syntax {
                line,
                message: format!("{key}: expected {what}, got {value:?}"),
            };
            match slot {
                Value::Text(s) => **s = value.to_owned(),
                Value::Flag(b) => {
                    **b = match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(bad("true or false")),
                    }
                }
                Value::U32(n) => **n = value.parse().map_err(|_| bad("an integer"))?,
                Value::U64(n) => **n = value.parse().map_err(|_| bad("an integer"))?,
            }
        }
        Ok(params)
    }

    pub fn to_params_file(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::from("# Basic chain parameters\n");
        for (key, value) in copy.fields() {
            if key == "anyone-can-connect" {
                out.push_str("\n# Global permissions\n");
            }
            let rendered = match value {
                Value::Text(s) => s.clone(),
                Value::Flag(b) => b.to_string(),
                Value::U32(n) => n.to_string(),
                Value::U64(n) => n.to_string(),
            };
            let _ = writeln!(out, "{key} = {rendered}");
        }
        out
    }
}

impl Canonical for ChainParams {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(&self.chain_name)
            .str(&self.description)
            .str(&self.protocol_tag)
            .str(&self.root_stream_name)
            .bool(self.root_stream_open)
            .bool(self.chain_is_testnet)
            .u32(self.target_block_time)
            .u64(self.max_block_size)
            .bool(self.anyone_can_connect)
            .bool(self.anyone_can_send)
            .bool(self.anyone_can_receive)
            .bool(self.anyone_can_receive_empty)
            .bool(self.anyone_can_create)
            .bool(self.anyone_can_issue)
            .bool(self.anyone_can_mine)
            .bool(self.anyone_can_activate)
            .bool(self.anyone_can_admin)
            .bool(self.miner_precheck);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(ChainParams {
            chain_name: dec.string()?,
            description: dec.string()?,
            protocol_tag: dec.string()?,
            root_stream_name: dec.string()?,
            root_stream_open: dec.bool()?,
            chain_is_testnet: dec.bool()?,
            target_block_time: dec.u32()?,
            max_block_size: dec.u64()?,
            anyone_can_connect: dec.bool()?,
            anyone_can_send: dec.bool()?,
            anyone_can_receive: dec.bool()?,
            anyone_can_receive_empty: dec.bool()?,
            anyone_can_create: dec.bool()?,
            anyone_can_issue: dec.bool()?,
            anyone_can_mine: dec.bool()?,
            anyone_can_activate: dec.bool()?,
            anyone_can_admin: dec.bool()?,
            miner_precheck: dec.bool()?,
        })
    }
}
