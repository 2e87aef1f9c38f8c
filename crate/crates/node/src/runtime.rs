//! Node lifecycle. One task owns the replica and the block log; API handlers
//! read immutable ledger snapshots and reach the replica through a queue.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tracing::{debug, error, info, warn};

use pams_core::audit::{AuditKind, AuditRecord};
use pams_core::codec::Canonical;
use pams_core::consensus::{Keyring, ProposalParams};
use pams_core::ledger::{Block, Ledger};
use pams_core::p2p::{Message, Transport};
use pams_core::replica::{Replica, ReplicaConfig, ReplicaEvent};
use pams_core::{Rules, Transaction, TxError};

use crate::config::{NodeConfig, PeerConfig};
use crate::error::NodeError;
use crate::storage::{recover, AuditTrail, Store};
use crate::transport::{spawn_listener, PeerLinks};

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

pub(crate) enum Command {
    Submit(Transaction, oneshot::Sender<Result<(), TxError>>),
}

/// State visible to API handlers.
pub struct Shared {
    pub node_id: String,
    pub rules: Rules,
    pub keyring: Keyring,
    pub sync_batch: usize,
    /// Bearer token to user id.
    pub(crate) tokens: BTreeMap<String, String>,
    snapshot: RwLock<Arc<Ledger>>,
    audit: Mutex<AuditTrail>,
    commands: mpsc::Sender<Command>,
    last_tx_time: AtomicU64,
}

impl Shared {
    pub fn snapshot(&self) -> Arc<Ledger> {
        Arc::clone(&self.snapshot.read().expect("snapshot lock"))
    }

    fn publish(&self, ledger: &Ledger) {
        *self.snapshot.write().expect("snapshot lock") = Arc::new(ledger.clone());
    }

    pub fn audit_records(&self) -> Vec<AuditRecord> {
        self.audit.lock().expect("audit lock").records().to_vec()
    }

    pub fn record_audit(&self, rec: AuditRecord) {
        warn!(kind = ?rec.kind, detail = %rec.detail, "audit");
        if let Err(e) = self.audit.lock().expect("audit lock").append(rec) {
            error!(error = %e, "audit trail write failed");
        }
    }

    /// Seconds since the epoch, strictly increasing per node so that two
    /// identical submissions in one second get distinct ids.
    pub(crate) fn next_tx_time(&self) -> u64 {
        let now = now_ms() / 1000;
        let mut prev = self.last_tx_time.load(Ordering::Relaxed);
        loop {
            let next = now.max(prev + 1);
            match self.last_tx_time.compare_exchange(prev, next, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => return next,
                Err(p) => prev = p,
            }
        }
    }

    /// `None` once the node is shutting down.
    pub(crate) async fn submit(&self, tx: Transaction) -> Option<Result<(), TxError>> {
        let (reply, rx) = oneshot::channel();
        self.commands.send(Command::Submit(tx, reply)).await.ok()?;
        rx.await.ok()
    }
}

pub struct NodeHandle {
    pub node_id: String,
    pub p2p_addr: SocketAddr,
    pub api_addr: SocketAddr,
    /// The log's torn final record was truncated at startup.
    pub recovered_torn_tail: bool,
    shared: Arc<Shared>,
    shutdown: watch::Sender<bool>,
    main: JoinHandle<()>,
    api: JoinHandle<()>,
}

impl NodeHandle {
    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub fn ledger(&self) -> Arc<Ledger> {
        self.shared.snapshot()
    }

    /// Stops after the current step; everything committed is on disk.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        let _ = self.main.await;
        let _ = self.api.await;
    }

    /// Stops without waiting for the current step to finish.
    pub fn kill(self) {
        let _ = self.shutdown.send(true);
        self.main.abort();
        self.api.abort();
    }

    /// Resolves when the main loop exits on its own (storage failure).
    pub async fn stopped(&mut self) {
        let _ = (&mut self.main).await;
    }
}

pub fn read_genesis(path: &Path) -> Result<Block, NodeError> {
    let bytes = std::fs::read(path).map_err(|e| NodeError::Genesis(format!("{}: {e}", path.display())))?;
    Block::from_canonical_bytes(&bytes).map_err(|e| NodeError::Genesis(format!("{}: {e}", path.display())))
}

/// Newest transaction timestamp on the chain, so ids issued after a restart
/// cannot repeat ones issued before it.
fn latest_tx_time(ledger: &Ledger) -> u64 {
    ledger.blocks().flat_map(|b| b.transactions.iter()).map(|t| t.timestamp).max().unwrap_or(0)
}

/// Binds the configured addresses and starts the node.
pub async fn start(cfg: NodeConfig) -> Result<NodeHandle, NodeError> {
    let p2p = TcpListener::bind(cfg.listen).await?;
    let api = TcpListener::bind(cfg.api_listen).await?;
    start_with_listeners(cfg, p2p, api).await
}

/// Replays the log, catches up from peer APIs, then serves. The listeners
/// are taken as given so tests can bind ephemeral ports up front.
pub async fn start_with_listeners(cfg: NodeConfig, p2p: TcpListener, api: TcpListener) -> Result<NodeHandle, NodeError> {
    let keyring = cfg.keyring()?;
    let rules = cfg.rules();
    let genesis = cfg.genesis.as_deref().map(read_genesis).transpose()?;
    let mut recovered = match recover(&cfg.data_dir, genesis.clone(), rules, &keyring) {
        Err(NodeError::Genesis(_)) if genesis.is_none() => {
            let g = fetch_genesis(&cfg.peers).await?;
            recover(&cfg.data_dir, Some(g), rules, &keyring)?
        }
        other => other?,
    };
    if recovered.truncated_tail {
        warn!(node = %cfg.node_id, "truncated a torn record at the end of the block log");
    }
    info!(node = %cfg.node_id, height = recovered.ledger.height(), "replayed block log");

    let sync_batch = 64;
    let synced = catch_up(&cfg.peers, &mut recovered, &keyring, sync_batch).await?;
    if synced > 0 {
        info!(node = %cfg.node_id, blocks = synced, "caught up from peers");
    }

    let replica_cfg = ReplicaConfig {
        node_id: cfg.node_id.clone(),
        role: cfg.role,
        peers: cfg.peers.iter().map(|p| p.id.clone()).collect(),
        block_interval_ms: cfg.block_interval_ms(),
        proposal: ProposalParams {
            max_txs_per_block: cfg.max_txs_per_block,
            allow_empty_blocks: cfg.allow_empty_blocks,
        },
        sync_batch,
    };
    let replica = Replica::new(replica_cfg, recovered.ledger, keyring.clone(), recovered.durable, now_ms());

    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let (cmd_tx, cmd_rx) = mpsc::channel(1024);
    let (in_tx, in_rx) = mpsc::channel(4096);
    let shared = Arc::new(Shared {
        node_id: cfg.node_id.clone(),
        rules,
        keyring,
        sync_batch,
        tokens: cfg.token_map(),
        snapshot: RwLock::new(Arc::new(replica.ledger().clone())),
        audit: Mutex::new(recovered.audit),
        commands: cmd_tx,
        last_tx_time: AtomicU64::new(latest_tx_time(replica.ledger())),
    });

    let p2p_addr = p2p.local_addr()?;
    let api_addr = api.local_addr()?;
    spawn_listener(p2p, in_tx, shutdown_rx.clone());
    let peer_addrs: Vec<(String, SocketAddr)> = cfg.peers.iter().map(|p| (p.id.clone(), p.addr)).collect();
    let links = PeerLinks::spawn(&peer_addrs, shutdown_rx.clone());

    let main = tokio::spawn(main_loop(replica, recovered.store, links, Arc::clone(&shared), cmd_rx, in_rx, shutdown_rx.clone()));
    let router = crate::api::router(Arc::clone(&shared));
    let mut api_stop = shutdown_rx;
    let api_task = tokio::spawn(async move {
        let served = axum::serve(api, router).with_graceful_shutdown(async move {
            let _ = api_stop.changed().await;
        });
        if let Err(e) = served.await {
            error!(error = %e, "api server failed");
        }
    });
    info!(node = %cfg.node_id, %p2p_addr, %api_addr, "node started");
    Ok(NodeHandle {
        node_id: cfg.node_id,
        p2p_addr,
        api_addr,
        recovered_torn_tail: recovered.truncated_tail,
        shared,
        shutdown: shutdown_tx,
        main,
        api: api_task,
    })
}

async fn main_loop(
    mut replica: Replica,
    mut store: Store,
    links: PeerLinks,
    shared: Arc<Shared>,
    mut commands: mpsc::Receiver<Command>,
    mut inbound: mpsc::Receiver<Message>,
    mut shutdown: watch::Receiver<bool>,
) {
    loop {
        let delay = replica.next_wakeup().saturating_sub(now_ms());
        tokio::select! {
            biased;
            _ = shutdown.changed() => break,
            Some(msg) = inbound.recv() => {
                let from = msg.sender_id.clone();
                replica.handle_message(&from, &msg, now_ms());
            }
            Some(cmd) = commands.recv() => match cmd {
                Command::Submit(tx, reply) => {
                    let _ = reply.send(replica.submit(tx));
                }
            },
            _ = tokio::time::sleep(Duration::from_millis(delay)) => replica.tick(now_ms()),
        }
        if let Err(e) = after_step(&mut replica, &mut store, &links, &shared) {
            // without durable storage the node must not keep voting
            error!(error = %e, "storage failure; stopping node");
            break;
        }
    }
}

/// Persists blocks and consensus state, then releases outgoing messages.
fn after_step(replica: &mut Replica, store: &mut Store, links: &PeerLinks, shared: &Shared) -> Result<(), NodeError> {
    let mut committed = false;
    for event in replica.take_events() {
        match event {
            ReplicaEvent::Committed(block) => {
                store.append_block(&block)?;
                committed = true;
                info!(
                    node = %shared.node_id,
                    height = block.height(),
                    hash = %block.block_hash.short(),
                    txs = block.transactions.len(),
                    "committed"
                );
            }
            ReplicaEvent::Rejected { height, round, reason } => {
                debug!(height, round, %reason, "proposal rejected");
            }
        }
    }
    if replica.take_durable_dirty() {
        store.save_durable(&replica.durable())?;
    }
    for rec in replica.take_audit() {
        shared.record_audit(rec);
    }
    if committed {
        shared.publish(replica.ledger());
    }
    for (to, msg) in replica.take_outbox() {
        if let Err(e) = links.send(&to, (*msg).clone()) {
            debug!(error = %e, "send dropped");
        }
    }
    Ok(())
}

#[derive(Deserialize)]
pub(crate) struct SyncBlocks {
    pub blocks: Vec<String>,
}

fn http_client() -> reqwest::Client {
    reqwest::Client::builder().timeout(Duration::from_secs(3)).build().expect("http client")
}

async fn fetch_blocks(client: &reqwest::Client, api: &str, from: u64) -> Result<Vec<Block>, String> {
    let url = format!("{}/api/sync/blocks?from={from}", api.trim_end_matches('/'));
    let resp = client.get(&url).send().await.map_err(|e| e.to_string())?;
    let body: SyncBlocks = resp.error_for_status().map_err(|e| e.to_string())?.json().await.map_err(|e| e.to_string())?;
    body.blocks
        .iter()
        .map(|h| {
            let bytes = hex::decode(h).map_err(|e| e.to_string())?;
            Block::from_canonical_bytes(&bytes).map_err(|e| e.to_string())
        })
        .collect()
}

async fn fetch_genesis(peers: &[PeerConfig]) -> Result<Block, NodeError> {
    let client = http_client();
    for api in peers.iter().filter_map(|p| p.api.as_deref()) {
        match fetch_blocks(&client, api, 0).await {
            Ok(blocks) if !blocks.is_empty() => return Ok(blocks.into_iter().next().expect("non-empty")),
            Ok(_) => {}
            Err(e) => debug!(peer = api, error = %e, "genesis fetch failed"),
        }
    }
    Err(NodeError::Genesis("no genesis file configured and no peer served one".into()))
}

/// Pulls missing blocks from every reachable peer API, verifying each.
/// Stops at a peer's first bad block and records a SyncFailure.
async fn catch_up(
    peers: &[PeerConfig],
    rec: &mut crate::storage::Recovered,
    keyring: &Keyring,
    batch: usize,
) -> Result<u64, NodeError> {
    let client = http_client();
    let start = rec.ledger.height();
    for peer in peers {
        let Some(api) = peer.api.as_deref() else { continue };
        loop {
            let blocks = match fetch_blocks(&client, api, rec.ledger.height() + 1).await {
                Ok(b) => b,
                Err(e) => {
                    debug!(peer = %peer.id, error = %e, "peer api unavailable");
                    break;
                }
            };
            let n = blocks.len();
            let mut failed = false;
            for block in blocks {
                let height = block.height();
                if let Err(e) = rec.ledger.append_block(block.clone(), keyring) {
                    rec.audit.append(AuditRecord::new(
                        now_ms(),
                        AuditKind::SyncFailure,
                        format!("block {height} from {}: {e}", peer.id),
                    ))?;
                    failed = true;
                    break;
                }
                rec.store.append_block(&block)?;
            }
            if failed || n < batch {
                break;
            }
        }
    }
    Ok(rec.ledger.height() - start)
}
