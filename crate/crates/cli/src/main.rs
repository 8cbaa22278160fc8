//! `consentchain` command-line client.
//!
//! All nodes of a consortium live in one chain directory; `--node` picks
//! which one acts (the founder by default). Commands that queue
//! transactions seal a block before returning, so their effects are
//! confirmed on exit.

mod store;

use std::fs;
use std::io::{self, Read as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use consentchain::bench::{latency_table, write_reports};
use consentchain::consent::{ConsentEvent, ConsentKind, Grantee};
use consentchain::enterprise::EnterpriseError;
use consentchain::ledger::{CatchUpError, ChainParams, ParamsError, ValidationError};
use consentchain::netsim::{run_scenario, ConfigError, ScenarioConfig, ScenarioError};
use consentchain::node::NodeError;
use consentchain::permissions::{Permission, PermissionSet, UnknownPermission};
use consentchain::sharing::{announce_pubkey, read_shared, record_consent, share_data, ShareError};
use consentchain::streams::{ItemFilter, StreamError, ACCESS_STREAM, ITEMS_STREAM};
use consentchain::{Address, Consortium, NodeIdentity};
use serde_json::{json, Value};
use thiserror::Error;

use store::Store;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("no chain in {0}; run `create-chain` first")]
    NoChain(PathBuf),
    #[error("chain directory is corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Enterprise(#[from] EnterpriseError),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Permission(#[from] UnknownPermission),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    CatchUp(#[from] CatchUpError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("state file: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "consentchain", version, about = "Permissioned ledger with consent-gated data sharing")]
struct Cli {
    /// Directory holding the chain, node keys and repositories.
    #[arg(long, global = true, default_value = "consentchain-data")]
    chain_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Node that acts; defaults to the founder.
    #[arg(long, global = true)]
    node: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Create a new chain; the founder holds every permission.
    CreateChain {
        name: String,
        /// Parameter file (`key = value` lines); defaults apply otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value = "node1")]
        founder: String,
        /// Genesis timestamp in ms; defaults to the current time.
        #[arg(long)]
        start_ms: Option<u64>,
    },
    /// Grant permissions, e.g. `grant <addr> connect,send,receive`.
    Grant {
        address: String,
        #[arg(num_args = 1.., required = true)]
        permissions: Vec<String>,
    },
    /// Revoke permissions.
    Revoke {
        address: String,
        #[arg(num_args = 1.., required = true)]
        permissions: Vec<String>,
    },
    CreateStream {
        name: String,
        #[arg(action = clap::ArgAction::Set, default_value_t = true)]
        open: bool,
    },
    /// Publish a file (`-` for stdin) under a key (`""` for none).
    Publish { stream: String, key: String, file: PathBuf },
    Subscribe { stream: String },
    Liststreams,
    GetItems {
        stream: String,
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        publisher: Option<String>,
    },
    #[command(subcommand)]
    Identity(IdentityCommand),
    /// Publish this node's public keys to the `pubkeys` stream.
    AnnounceKey,
    /// Store a profile document in this node's repository.
    Ingest { file: PathBuf },
    /// Share a user's consented profile fields, or a raw file, with recipients.
    Share {
        #[arg(long, required_unless_present = "file", conflicts_with = "file")]
        user: Option<String>,
        #[arg(long)]
        file: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        to: Vec<String>,
    },
    /// Decrypt a shared profile and store it in this node's repository.
    Import {
        item_id: String,
        /// Print the raw plaintext instead of importing a profile.
        #[arg(long)]
        raw: bool,
    },
    /// Record a user-signed consent event.
    Consent {
        #[arg(value_parser = parse_kind)]
        kind: ConsentKind,
        #[arg(long)]
        user: String,
        /// Recipient address, node label, or `*` for anyone.
        #[arg(long)]
        grantee: String,
        #[arg(long, value_delimiter = ',')]
        fields: Vec<String>,
    },
    /// Run a latency scenario and write its reports.
    Bench {
        #[arg(long, default_value = "S1")]
        scenario: String,
        /// TOML scenario config; overrides --scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        observations: Option<usize>,
        /// Output directory; defaults to `<chain-dir>/reports`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-validate the acting node's chain from genesis.
    Validate,
    /// Stop a node; it stops receiving blocks until started.
    Stop { label: String },
    /// Start a stopped node and catch it up.
    Start { label: String },
}

#[derive(Debug, Subcommand)]
enum IdentityCommand {
    /// Create a node that joins the chain (it still needs grants).
    New { label: String },
    /// Create a user key for signing consent events.
    User { name: String },
    /// List nodes and users with their addresses.
    List,
}

fn parse_kind(s: &str) -> Result<ConsentKind, String> {
    s.parse()
}

fn parse_permissions(words: &[String]) -> Result<PermissionSet, CliError> {
    let mut set = PermissionSet::EMPTY;
    for w in words.iter().flat_map(|w| w.split(',')) {
        let w = w.trim();
        if !w.is_empty() {
            set = set.with(w.parse::<Permission>()?);
        }
    }
    if set == PermissionSet::EMPTY {
        return Err(CliError::Usage("no permissions given".into()));
    }
    Ok(set)
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        Ok(fs::read(path)?)
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

/// What a command prints: a JSON value and its table rendering.
struct Report {
    json: Value,
    text: String,
}

impl Report {
    fn new(json: Value, text: impl Into<String>) -> Self {
        Report { json, text: text.into() }
    }

    fn print(&self, format: Format) {
        match format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&self.json).expect("json value")),
            Format::Table => {
                let text = self.text.trim_end();
                if !text.is_empty() {
                    println!("{text}");
                }
            }
        }
    }
}

fn sealed(store: &mut Store) -> Result<Value, CliError> {
    let block = store.consortium.seal()?;
    Ok(json!({ "height": block.height, "block_hash": block.block_hash.to_string(), "transactions": block.transactions.len() }))
}

fn run(cli: Cli) -> Result<Report, CliError> {
    let dir = cli.chain_dir.as_path();
    let node = cli.node.as_deref();
    match cli.command {
        Command::CreateChain { name, params, founder, start_ms } => {
            let mut p = match &params {
                Some(path) => ChainParams::parse(&fs::read_to_string(path)?)?,
                None => ChainParams::default(),
            };
            p.chain_name = name;
            p.validate()?;
            let text = p.to_params_file();
            let id = NodeIdentity::from_rng(&mut rand::thread_rng());
            let mut c = Consortium::create(p, &founder, id, start_ms.unwrap_or_else(now_ms))?;
            c.bootstrap_sharing()?;
            let f = c.node_mut(&founder)?;
            announce_pubkey(f)?;
            f.subscribe(ITEMS_STREAM)?;
            f.subscribe(ACCESS_STREAM)?;
            let mut store = Store::create(dir, c, &text)?;
            sealed(&mut store)?;
            store.save()?;
            let f = store.consortium.founder();
            Ok(Report::new(
                json!({ "chain": f.chain().params().chain_name, "founder": founder, "address": f.address(), "height": f.chain().height() }),
                format!("created chain {:?} in {}\nfounder {founder}: {}", f.chain().params().chain_name, dir.display(), f.address()),
            ))
        }
        Command::Identity(IdentityCommand::New { label }) => {
            let mut store = Store::open(dir)?;
            if store.consortium.node(&label).is_ok() || store.users.contains_key(&label) {
                return Err(CliError::Usage(format!("{label:?} already exists")));
            }
            let id = NodeIdentity::from_rng(&mut rand::thread_rng());
            let addr = store.consortium.add_node(&label, id)?.address().clone();
            store.save()?;
            Ok(Report::new(json!({ "label": label, "address": addr }), format!("{label}: {addr}")))
        }
        Command::Identity(IdentityCommand::User { name }) => {
            let mut store = Store::open(dir)?;
            if store.consortium.node(&name).is_ok() || store.users.contains_key(&name) {
                return Err(CliError::Usage(format!("{name:?} already exists")));
            }
            let id = NodeIdentity::from_rng(&mut rand::thread_rng());
            let addr = id.address().clone();
            store.users.insert(name.clone(), id);
            store.save()?;
            Ok(Report::new(json!({ "user": name, "address": addr }), format!("{name}: {addr}")))
        }
        Command::Identity(IdentityCommand::List) => {
            let store = Store::open(dir)?;
            let mut rows = Vec::new();
            let mut text = String::new();
            for n in store.consortium.nodes() {
                let perms = n.chain().state().permissions().effective(n.address());
                let status = if n.is_running() { "running" } else { "stopped" };
                rows.push(json!({ "kind": "node", "label": n.label(), "address": n.address(), "permissions": perms, "status": status, "height": n.chain().height() }));
                text += &format!("node  {:<12} {}  [{perms}] {status} h={}\n", n.label(), n.address(), n.chain().height());
            }
            for (name, u) in &store.users {
                rows.push(json!({ "kind": "user", "label": name, "address": u.address() }));
                text += &format!("user  {name:<12} {}\n", u.address());
            }
            Ok(Report::new(Value::Array(rows), text))
        }
        Command::Grant { address, permissions } => change_permissions(dir, node, &address, &permissions, true),
        Command::Revoke { address, permissions } => change_permissions(dir, node, &address, &permissions, false),
        Command::CreateStream { name, open } => {
            let mut store = Store::open(dir)?;
            store.node_mut(node)?.create_stream(&name, open)?;
            let block = sealed(&mut store)?;
            store.save()?;
            Ok(Report::new(json!({ "stream": name, "open": open, "block": block }), format!("created stream {name:?} (open: {open})")))
        }
        Command::Publish { stream, key, file } => {
            let data = read_input(&file)?;
            let mut store = Store::open(dir)?;
            let key = (!key.is_empty()).then_some(key);
            let tx = store.node_mut(node)?.publish(&stream, key.as_deref(), data.clone())?;
            let block = sealed(&mut store)?;
            store.save()?;
            Ok(Report::new(
                json!({ "stream": stream, "key": key, "bytes": data.len(), "tx_id": tx.tx_id.to_string(), "block": block }),
                format!("published {} bytes to {stream:?}\ntx {}", data.len(), tx.tx_id),
            ))
        }
        Command::Subscribe { stream } => {
            let mut store = Store::open(dir)?;
            let n = store.node_mut(node)?;
            n.subscribe(&stream)?;
            let label = n.label().to_owned();
            store.save()?;
            Ok(Report::new(json!({ "node": label, "subscribed": stream }), format!("{label} subscribed to {stream:?}")))
        }
        Command::Liststreams => {
            let store = Store::open(dir)?;
            let list = store.node(node)?.list_streams()?;
            let mut text = format!("{:<16} {:>6} {:>10}  {:<5} {:<4} creator\n", "name", "items", "publishers", "open", "sub");
            for s in &list {
                let creator = label_of(&store, &s.creator);
                text += &format!(
                    "{:<16} {:>6} {:>10}  {:<5} {:<4} {creator}\n",
                    s.name, s.item_count, s.publisher_count, s.open, if s.subscribed { "yes" } else { "no" }
                );
            }
            Ok(Report::new(serde_json::to_value(&list)?, text))
        }
        Command::GetItems { stream, key, publisher } => {
            let store = Store::open(dir)?;
            let filter = ItemFilter {
                key,
                publisher: publisher.map(|p| store.resolve(&p)).transpose()?,
            };
            let items = store.node(node)?.get_items(&stream, &filter)?;
            let mut text = format!("{} item(s)\n", items.len());
            for it in &items {
                let preview = match std::str::from_utf8(&it.data) {
                    Ok(s) if s.len() <= 60 => s.to_owned(),
                    _ => format!("<{} bytes>", it.data.len()),
                };
                text += &format!(
                    "{:<18} key={:<20} {}\n",
                    label_of(&store, &it.publisher),
                    it.key.as_deref().unwrap_or("-"),
                    preview
                );
            }
            Ok(Report::new(serde_json::to_value(&items)?, text))
        }
        Command::AnnounceKey => {
            let mut store = Store::open(dir)?;
            let n = store.node_mut(node)?;
            announce_pubkey(n)?;
            let addr = n.address().clone();
            sealed(&mut store)?;
            store.save()?;
            Ok(Report::new(json!({ "announced": addr }), format!("announced keys for {addr}")))
        }
        Command::Ingest { file } => {
            let store = Store::open(dir)?;
            let label = store.node(node)?.label().to_owned();
            let mut repo = store.repo(&label)?;
            let profile = repo.ingest(&read_input(&file)?)?;
            store.save_repo(&label, &repo)?;
            Ok(Report::new(
                json!({ "node": label, "user_id": profile.user_id, "fields": profile.present_fields() }),
                format!("{label} stored profile {}", profile.user_id),
            ))
        }
        Command::Share { user, file, to } => {
            let mut store = Store::open(dir)?;
            let recipients = to.iter().map(|r| store.resolve(r.trim())).collect::<Result<Vec<Address>, _>>()?;
            let label = store.node(node)?.label().to_owned();
            let mut rng = rand::thread_rng();
            let item_id = match (user, file) {
                (Some(user), _) => {
                    let uid = store.resolve(&user).map(|a| a.to_string()).unwrap_or(user);
                    let repo = store.repo(&label)?;
                    repo.publish_profile(store.node_mut(node)?, &mut rng, &uid, &recipients)?
                }
                (None, Some(file)) => {
                    let data = read_input(&file)?;
                    share_data(store.node_mut(node)?, &mut rng, &data, &recipients, None)?.item_id
                }
                (None, None) => unreachable!("clap requires --user or --file"),
            };
            sealed(&mut store)?;
            store.save()?;
            Ok(Report::new(json!({ "item_id": item_id, "recipients": recipients }), item_id))
        }
        Command::Import { item_id, raw } => {
            let store = Store::open(dir)?;
            let n = store.node(node)?;
            if raw {
                let data = read_shared(n, &item_id)?;
                let text = String::from_utf8_lossy(&data).into_owned();
                return Ok(Report::new(json!({ "item_id": item_id, "data": hex::encode(&data) }), text));
            }
            let label = n.label().to_owned();
            let mut repo = store.repo(&label)?;
            let profile = repo.import_profile(n, &item_id)?;
            store.save_repo(&label, &repo)?;
            let mut text = format!("{label} imported {}\n", profile.user_id);
            for f in profile.present_fields() {
                text += &format!("  {f}: {}\n", profile.field(f).unwrap_or_default());
            }
            let fields: serde_json::Map<String, Value> = profile
                .present_fields()
                .into_iter()
                .map(|f| (f.to_owned(), Value::from(profile.field(f).unwrap_or_default())))
                .collect();
            Ok(Report::new(json!({ "node": label, "user_id": profile.user_id, "fields": fields }), text))
        }
        Command::Consent { kind, user, grantee, fields } => {
            let mut store = Store::open(dir)?;
            let signer = store.user(&user)?.clone();
            let grantee = if grantee == "*" { Grantee::Any } else { Grantee::Address(store.resolve(&grantee)?) };
            let uid = signer.address().to_string();
            let version = store
                .node(node)?
                .chain()
                .state()
                .consent()
                .record(&uid, &grantee)
                .map_or(0, |r| r.version);
            let event = ConsentEvent::signed(&signer, kind, grantee.clone(), fields.clone(), version);
            record_consent(store.node_mut(node)?, &event)?;
            sealed(&mut store)?;
            store.save()?;
            let rec = store.node(node)?.chain().state().consent().record(&uid, &grantee).cloned();
            let state = rec.as_ref().map(|r| format!("{:?}", r.state).to_uppercase()).unwrap_or_default();
            Ok(Report::new(
                json!({ "user_id": uid, "grantee": grantee.to_string(), "event": kind, "state": state, "fields": rec.map(|r| r.effective_fields().clone()) }),
                format!("{kind:?} recorded for {uid} -> {grantee}: {state}"),
            ))
        }
        Command::Bench { scenario, config, seed, observations, out } => {
            let mut cfg = match &config {
                Some(path) => ScenarioConfig::from_toml(&fs::read_to_string(path)?)?,
                None => ScenarioConfig::named(&scenario, 0),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = observations {
                cfg.observations = o;
            }
            cfg.validate()?;
            let run = run_scenario(&cfg)?;
            let out = out.unwrap_or_else(|| dir.join("reports"));
            let files = write_reports(&out, &run.latency, &run.memory)?;
            let mut text = latency_table(std::slice::from_ref(&run.latency));
            text += &format!(
                "memory: {} -> {} bytes (delta {}), {} bytes per block\n",
                run.memory.initial_bytes, run.memory.post_start_bytes, run.memory.delta_bytes, run.memory.per_block_bytes
            );
            for f in &files {
                text += &format!("wrote {}\n", f.display());
            }
            Ok(Report::new(
                json!({ "latency": run.latency, "memory": run.memory, "files": files, "converged": run.converged }),
                text,
            ))
        }
        Command::Validate => {
            let store = Store::open(dir)?;
            let chain = store.node(node)?.chain();
            chain.validate_chain()?;
            Ok(Report::new(
                json!({ "valid": true, "height": chain.height(), "state_hash": chain.state_hash().to_string() }),
                format!("chain valid to height {}\nstate {}", chain.height(), chain.state_hash()),
            ))
        }
        Command::Stop { label } => {
            let mut store = Store::open(dir)?;
            store.consortium.stop(&label)?;
            store.save()?;
            Ok(Report::new(json!({ "stopped": label }), format!("stopped {label}")))
        }
        Command::Start { label } => {
            let mut store = Store::open(dir)?;
            let applied = store.consortium.restart(&label)?;
            store.save()?;
            Ok(Report::new(json!({ "started": label, "blocks_applied": applied }), format!("started {label}, caught up {applied} block(s)")))
        }
    }
}

fn label_of(store: &Store, addr: &Address) -> String {
    store
        .consortium
        .nodes()
        .iter()
        .find(|n| n.address() == addr)
        .map_or_else(|| addr.to_string(), |n| n.label().to_owned())
}

fn change_permissions(
    dir: &Path,
    node: Option<&str>,
    target: &str,
    words: &[String],
    grant: bool,
) -> Result<Report, CliError> {
    let mut store = Store::open(dir)?;
    let flags = parse_permissions(words)?;
    let addr = store.resolve(target)?;
    let n = store.node_mut(node)?;
    if grant {
        n.grant(&addr, flags)?;
    } else {
        n.revoke(&addr, flags)?;
    }
    let block = sealed(&mut store)?;
    store.save()?;
    let now = store.node(node)?.chain().state().permissions().effective(&addr);
    let verb = if grant { "granted" } else { "revoked" };
    Ok(Report::new(
        json!({ "address": addr, verb: flags, "effective": now, "block": block }),
        format!("{verb} [{flags}] for {addr}\nnow [{now}]"),
    ))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let format = cli.format;
    match run(cli) {
        Ok(report) => {
            report.print(format);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
