//! Node configuration file (TOML).

use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use pams_core::consensus::Keyring;
use pams_core::replica::NodeRole;
use pams_core::{MacSecret, Rules};

use crate::error::NodeError;

pub const CONFIG_ENV: &str = "PAMS_CONFIG";

#[derive(Clone, Deserialize)]
pub struct PeerConfig {
    pub id: String,
    /// Peer-to-peer socket address.
    pub addr: SocketAddr,
    /// Base URL of the peer's HTTP API, used for catching up at startup.
    #[serde(default)]
    pub api: Option<String>,
}

fn default_interval() -> f64 {
    5.0
}
fn default_true() -> bool {
    true
}
fn default_max_txs() -> usize {
    100
}
fn default_min_quotes() -> usize {
    Rules::default().min_quotes
}

#[derive(Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub node_id: String,
    pub role: NodeRole,
    pub listen: SocketAddr,
    pub api_listen: SocketAddr,
    #[serde(default)]
    pub peers: Vec<PeerConfig>,
    pub data_dir: PathBuf,
    /// Seconds; fractions allowed.
    #[serde(default = "default_interval")]
    pub block_interval: f64,
    #[serde(default = "default_true")]
    pub allow_empty_blocks: bool,
    #[serde(default = "default_max_txs")]
    pub max_txs_per_block: usize,
    #[serde(default = "default_min_quotes")]
    pub min_quotes: usize,
    /// Genesis block file. Optional when the log already exists or a peer
    /// API can serve it.
    #[serde(default)]
    pub genesis: Option<PathBuf>,
    /// Validator id to hex MAC secret, for every validator.
    #[serde(default)]
    pub keyring: BTreeMap<String, String>,
    /// User id to API bearer token.
    #[serde(default)]
    pub tokens: BTreeMap<String, String>,
}

impl fmt::Debug for NodeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeConfig")
            .field("node_id", &self.node_id)
            .field("role", &self.role)
            .field("listen", &self.listen)
            .field("api_listen", &self.api_listen)
            .field("peers", &self.peers.iter().map(|p| &p.id).collect::<Vec<_>>())
            .field("data_dir", &self.data_dir)
            .field("block_interval", &self.block_interval)
            .field("keyring", &self.keyring.keys().collect::<Vec<_>>())
            .field("tokens", &format_args!("<{} redacted>", self.tokens.len()))
            .finish_non_exhaustive()
    }
}

impl NodeConfig {
    pub fn from_toml(text: &str) -> Result<Self, NodeError> {
        let cfg: NodeConfig = toml::from_str(text).map_err(|e| NodeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, NodeError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NodeError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        if let Some(g) = cfg.genesis.as_mut().filter(|g| g.is_relative()) {
            *g = base.join(&*g);
        }
        Ok(cfg)
    }

    /// `explicit` wins over the `PAMS_CONFIG` environment variable.
    pub fn resolve_path(explicit: Option<&Path>) -> Result<PathBuf, NodeError> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
            .ok_or_else(|| NodeError::Config(format!("no --config given and {CONFIG_ENV} is unset")))
    }

    fn validate(&self) -> Result<(), NodeError> {
        let fail = |m: String| Err(NodeError::Config(m));
        if self.node_id.is_empty() {
            return fail("node_id is empty".into());
        }
        if !(self.block_interval.is_finite() && self.block_interval >= 0.01) {
            return fail(format!("block_interval {} out of range", self.block_interval));
        }
        if self.max_txs_per_block == 0 {
            return fail("max_txs_per_block must be positive".into());
        }
        self.keyring()?;
        if self.role == NodeRole::Validator && !self.keyring.contains_key(&self.node_id) {
            return fail(format!("validator {} has no secret in [keyring]", self.node_id));
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.peers {
            if p.id == self.node_id || !seen.insert(&p.id) {
                return fail(format!("peer {} listed twice or is this node", p.id));
            }
        }
        let mut tokens = std::collections::BTreeSet::new();
        for (user, token) in &self.tokens {
            if token.len() < 8 || !tokens.insert(token) {
                return fail(format!("token for {user} is shorter than 8 characters or reused"));
            }
        }
        Ok(())
    }

    pub fn keyring(&self) -> Result<Keyring, NodeError> {
        self.keyring
            .iter()
            .map(|(id, hex)| {
                MacSecret::from_hex(hex)
                    .map(|s| (id.clone(), s))
                    .map_err(|e| NodeError::Config(format!("keyring entry {id}: {e}")))
            })
            .collect()
    }

    pub fn rules(&self) -> Rules {
        Rules { min_quotes: self.min_quotes }
    }

    pub fn block_interval_ms(&self) -> u64 {
        (self.block_interval * 1000.0).round() as u64
    }

    /// Token to user id.
    pub fn token_map(&self) -> BTreeMap<String, String> {
        self.tokens.iter().map(|(user, token)| (token.clone(), user.clone())).collect()
    }
}
