//! `pams`: operator command line.
//!
//! Exit codes: 0 success, 1 verification or validation failure, 2 usage or
//! configuration error. Failures print one `error: code=<code> msg=<text>`
//! line on stderr.

mod bootstrap;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use pams_core::assets::qr_png;
use pams_core::blocklog::verify_log;
use pams_core::codec::Canonical;
use pams_core::consensus::Keyring;
use pams_core::ledger::VerificationReport;
use pams_core::p2p::sim::{run_simulation, SimScenario};
use pams_core::{MacSecret, Payload, Role, Rules};
use pams_node::NodeConfig;

use bootstrap::Bootstrap;

#[derive(Debug)]
pub struct CliError {
    code: String,
    msg: String,
    exit: u8,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { code: "Usage".into(), msg: msg.into(), exit: 2 }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: "ConfigError".into(), msg: msg.into(), exit: 2 }
    }

    pub fn invalid(code: impl Into<String>, msg: impl Into<String>) -> Self {
        CliError { code: code.into(), msg: msg.into(), exit: 1 }
    }

    pub fn exit_code(&self) -> u8 {
        self.exit
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // one line, whatever the message contains
        write!(f, "error: code={} msg={}", self.code, self.msg.replace('\n', " "))
    }
}

impl From<pams_node::NodeError> for CliError {
    fn from(e: pams_node::NodeError) -> Self {
        let exit = if matches!(e, pams_node::NodeError::CorruptLog { .. }) { 1 } else { 2 };
        CliError { code: e.code().into(), msg: e.to_string(), exit }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError { code: "IoError".into(), msg: format!("{}: {e}", path.display()), exit: 2 }
}

#[derive(Parser)]
#[command(name = "pams", version, about = "Procurement and asset ledger node and tools")]
struct Cli {
    /// Human-oriented output instead of stable key=value lines.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the genesis block from a bootstrap file.
    Init {
        #[arg(long)]
        genesis: PathBuf,
        /// Where to write the encoded genesis block.
        #[arg(long, default_value = "genesis.blk")]
        out: PathBuf,
    },
    /// Run a node until interrupted.
    Run {
        #[arg(long, env = pams_node::config::CONFIG_ENV)]
        config: Option<PathBuf>,
    },
    /// Print a fresh validator secret as hex.
    Keygen,
    /// Verify a block log offline.
    Verify {
        #[arg(long)]
        log: PathBuf,
        /// Node config supplying the keyring and rules.
        #[arg(long, env = pams_node::config::CONFIG_ENV, conflicts_with = "keyring")]
        config: Option<PathBuf>,
        /// TOML table of validator id to hex secret.
        #[arg(long)]
        keyring: Option<PathBuf>,
    },
    /// Fetch an asset's label and write it as PNG, or as text to stdout with `-`.
    Qr {
        #[arg(long)]
        asset: String,
        #[arg(long)]
        out: String,
        #[command(flatten)]
        conn: Conn,
    },
    /// Run a simulator scenario and write its trace and final chains.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Submit administrator transactions through a node's API.
    Admin {
        #[command(subcommand)]
        action: AdminAction,
        #[command(flatten)]
        conn: Conn,
    },
}

#[derive(Subcommand)]
enum AdminAction {
    AddUser {
        #[arg(long)]
        user_id: String,
        #[arg(long)]
        display_name: Option<String>,
        /// Repeatable; e.g. `--role employee --role canvasser`.
        #[arg(long = "role", required = true, value_parser = parse_role)]
        roles: Vec<Role>,
    },
    DeactivateUser {
        #[arg(long)]
        user_id: String,
    },
    AddValidator {
        #[arg(long)]
        validator_id: String,
    },
    RemoveValidator {
        #[arg(long)]
        validator_id: String,
    },
}

#[derive(Args)]
struct Conn {
    /// Node API base URL; defaults to the config's api_listen.
    #[arg(long, global = true)]
    node: Option<String>,
    #[arg(long, global = true, env = "PAMS_TOKEN", hide_env_values = true)]
    token: Option<String>,
    #[arg(long, global = true, env = pams_node::config::CONFIG_ENV)]
    config: Option<PathBuf>,
}

fn parse_role(s: &str) -> Result<Role, String> {
    serde_json::from_value(Value::String(s.to_owned())).map_err(|_| format!("unknown role {s:?}"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", CliError::usage(first));
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let pretty = cli.pretty;
    match cli.command {
        Command::Init { genesis, out } => init(&genesis, &out, pretty),
        Command::Run { config } => run(config.as_deref()),
        Command::Keygen => {
            println!("{}", MacSecret::generate(&mut rand::rngs::OsRng).to_hex());
            Ok(())
        }
        Command::Verify { log, config, keyring } => verify(&log, config.as_deref(), keyring.as_deref(), pretty),
        Command::Qr { asset, out, conn } => qr(&asset, &out, &conn),
        Command::Sim { scenario, out } => sim(&scenario, &out, pretty),
        Command::Admin { action, conn } => admin(action, &conn, pretty),
    }
}

fn now_secs() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn init(bootstrap: &Path, out: &Path, pretty: bool) -> Result<(), CliError> {
    let b = Bootstrap::from_toml(&read_text(bootstrap)?)?;
    let genesis = b.genesis(now_secs())?;
    std::fs::write(out, genesis.to_canonical_bytes()).map_err(|e| io_error(out, e))?;
    if pretty {
        println!("Genesis written to {}", out.display());
        println!("  transactions: {}", genesis.transactions.len());
        println!("  hash:         {}", genesis.block_hash);
    } else {
        println!("genesis hash={} txs={} out={}", genesis.block_hash, genesis.transactions.len(), out.display());
    }
    Ok(())
}

fn load_config(explicit: Option<&Path>) -> Result<NodeConfig, CliError> {
    let path = NodeConfig::resolve_path(explicit)?;
    Ok(NodeConfig::load(&path)?)
}

fn run(config: Option<&Path>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::config(e.to_string()))?;
    rt.block_on(async move {
        let mut node = pams_node::start(cfg).await?;
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {
                node.shutdown().await;
                Ok(())
            }
            _ = node.stopped() => Err(CliError::invalid("StorageFailure", "node stopped after a storage error")),
        }
    })
}

fn keyring_file(path: &Path) -> Result<Keyring, CliError> {
    let table: BTreeMap<String, String> =
        toml::from_str(&read_text(path)?).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    table
        .into_iter()
        .map(|(id, hex)| {
            MacSecret::from_hex(&hex)
                .map(|s| (id.clone(), s))
                .map_err(|e| CliError::config(format!("keyring entry {id}: {e}")))
        })
        .collect()
}

fn verify(log: &Path, config: Option<&Path>, keyring: Option<&Path>, pretty: bool) -> Result<(), CliError> {
    let (keyring, rules) = match keyring {
        Some(k) => (keyring_file(k)?, Rules::default()),
        None => {
            let cfg = load_config(config)?;
            (cfg.keyring()?, cfg.rules())
        }
    };
    let bytes = std::fs::read(log).map_err(|e| io_error(log, e))?;
    match verify_log(&bytes, rules, &keyring) {
        VerificationReport::Valid { height, state_hash } => {
            if pretty {
                println!("Chain valid through height {height}");
                println!("  state hash: {state_hash}");
            } else {
                println!("valid height={height} state_hash={state_hash}");
            }
            Ok(())
        }
        VerificationReport::Invalid { height, check, detail } => {
            if pretty {
                println!("Chain INVALID at height {height}");
                println!("  check:  {check}");
                println!("  detail: {detail}");
            } else {
                println!("invalid height={height} check={check}");
            }
            Err(CliError::invalid("VerificationFailed", format!("height {height}: {check}: {detail}")))
        }
    }
}

fn connection(conn: &Conn) -> Result<(String, String), CliError> {
    let cfg = match (&conn.node, &conn.config) {
        (Some(_), _) => None,
        (None, explicit) => Some(load_config(explicit.as_deref())?),
    };
    let base = match (&conn.node, &cfg) {
        (Some(n), _) => n.trim_end_matches('/').to_owned(),
        (None, Some(cfg)) => {
            let mut addr = cfg.api_listen;
            if addr.ip().is_unspecified() {
                addr.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
            }
            format!("http://{addr}")
        }
        (None, None) => unreachable!("config loaded when --node is absent"),
    };
    let token = conn.token.clone().ok_or_else(|| CliError::usage("--token or PAMS_TOKEN is required"))?;
    Ok((base, token))
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build().expect("http client")
}

/// Maps a non-2xx API answer onto the error line.
fn api_result(resp: reqwest::blocking::Response) -> Result<Value, CliError> {
    let status = resp.status();
    let body: Value = resp.json().unwrap_or(Value::Null);
    if status.is_success() {
        return Ok(body);
    }
    let code = body["error"].as_str().unwrap_or("HttpError").to_owned();
    let msg = body["message"].as_str().map_or_else(|| format!("HTTP {status}"), str::to_owned);
    let exit = if status.is_client_error() && status != reqwest::StatusCode::UNAUTHORIZED { 1 } else { 2 };
    Err(CliError { code, msg, exit })
}

fn unreachable_node(base: &str, e: reqwest::Error) -> CliError {
    CliError { code: "NodeUnreachable".into(), msg: format!("{base}: {e}"), exit: 2 }
}

fn qr(asset: &str, out: &str, conn: &Conn) -> Result<(), CliError> {
    let (base, token) = connection(conn)?;
    let resp = client()
        .get(format!("{base}/api/assets/{asset}"))
        .bearer_auth(token)
        .send()
        .map_err(|e| unreachable_node(&base, e))?;
    let body = api_result(resp)?;
    let text = body["qr"].as_str().ok_or_else(|| CliError::invalid("BadResponse", "no qr field"))?;
    if out == "-" {
        println!("{text}");
        return Ok(());
    }
    let path = Path::new(out);
    std::fs::write(path, qr_png(text)).map_err(|e| io_error(path, e))?;
    println!("qr asset={asset} out={out}");
    Ok(())
}

fn sim(scenario: &Path, out: &Path, pretty: bool) -> Result<(), CliError> {
    let s = SimScenario::from_toml(&read_text(scenario)?).map_err(|e| CliError::config(e.to_string()))?;
    let result = run_simulation(&s).map_err(|e| CliError::config(e.to_string()))?;
    let chains = out.join("chains");
    std::fs::create_dir_all(&chains).map_err(|e| io_error(&chains, e))?;
    let write = |p: PathBuf, bytes: &[u8]| std::fs::write(&p, bytes).map_err(|e| io_error(&p, e));
    write(out.join("trace.txt"), result.trace_text().as_bytes())?;
    let mut json = serde_json::to_string_pretty(&result).expect("result serializes");
    json.push('\n');
    write(out.join("result.json"), json.as_bytes())?;
    for (id, node) in &result.nodes {
        write(chains.join(format!("{id}.log")), &node.log)?;
    }

    let violations = result.safety_violations();
    let conflicts = result.conflicting_heights();
    let mut stdout = std::io::stdout().lock();
    for (id, n) in &result.nodes {
        if pretty {
            let _ = writeln!(stdout, "{id:<8} height {:>5}  tip {}  {}", n.height, n.tip.short(), if n.alive { "up" } else { "down" });
        } else {
            let _ = writeln!(stdout, "node id={id} alive={} height={} tip={}", n.alive, n.height, n.tip);
        }
    }
    let _ = writeln!(
        stdout,
        "summary safety_violations={violations} conflicting_heights={} converged={} committed_txs={}",
        conflicts.len(),
        result.converged(),
        result.committed.len()
    );
    if violations > 0 || !conflicts.is_empty() {
        return Err(CliError::invalid("SafetyViolation", format!("conflicting heights {conflicts:?}")));
    }
    Ok(())
}

fn admin(action: AdminAction, conn: &Conn, pretty: bool) -> Result<(), CliError> {
    let payload = match action {
        AdminAction::AddUser { user_id, display_name, roles } => Payload::AddUser {
            display_name: display_name.unwrap_or_else(|| user_id.clone()),
            user_id,
            roles: roles.into_iter().collect(),
        },
        AdminAction::DeactivateUser { user_id } => Payload::DeactivateUser { user_id },
        AdminAction::AddValidator { validator_id } => Payload::AddValidator { validator_id },
        AdminAction::RemoveValidator { validator_id } => Payload::RemoveValidator { validator_id },
    };
    let (base, token) = connection(conn)?;
    let resp = client()
        .post(format!("{base}/api/tx"))
        .bearer_auth(token)
        .json(&payload)
        .send()
        .map_err(|e| unreachable_node(&base, e))?;
    let body = api_result(resp)?;
    let (id, kind) = (body["tx_id"].as_str().unwrap_or(""), body["tx_type"].as_str().unwrap_or(""));
    if pretty {
        println!("Submitted {kind}\n  tx id: {id}");
    } else {
        println!("submitted tx_id={id} tx_type={kind}");
    }
    Ok(())
}
