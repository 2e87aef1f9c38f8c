//! Localhost clusters of real nodes for integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::time::{Duration, Instant};

use reqwest::StatusCode;
use serde_json::Value;
use tempfile::TempDir;
use tokio::net::TcpListener;

use pams_core::codec::Canonical;
use pams_core::ledger::make_genesis;
use pams_core::replica::NodeRole;
use pams_core::payload::{ReceivedLine, Verdict};
use pams_core::procurement::select_winning_quote;
use pams_core::testkit::{bootstrap_payloads_with, quotes_for, secret_for, two_lines, validator_ids, GENESIS_TIME, USERS};
use pams_core::{Block, Digest, Payload};
use pams_node::config::PeerConfig;
use pams_node::{start_with_listeners, NodeConfig, NodeHandle};

pub fn token(user: &str) -> String {
    format!("token-{user}-0001")
}

pub struct Spec {
    pub id: String,
    pub role: NodeRole,
    pub p2p: SocketAddr,
    pub api: SocketAddr,
}

pub struct Cluster {
    pub dir: TempDir,
    pub genesis: Block,
    pub specs: Vec<Spec>,
    pub nodes: BTreeMap<String, NodeHandle>,
    pub interval: f64,
    pub allow_empty: bool,
}

async fn bind_pair() -> (TcpListener, TcpListener) {
    let p = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let a = TcpListener::bind("127.0.0.1:0").await.unwrap();
    (p, a)
}

impl Cluster {
    /// Validators `v1..vN` plus full nodes `f1..fM`, all started.
    pub async fn start(validators: usize, full: usize, interval: f64, allow_empty: bool) -> Cluster {
        let dir = tempfile::tempdir().unwrap();
        let vids = validator_ids(validators);
        let genesis = make_genesis(&bootstrap_payloads_with(&vids), GENESIS_TIME).unwrap();
        std::fs::write(dir.path().join("genesis.blk"), genesis.to_canonical_bytes()).unwrap();
        let ids: Vec<(String, NodeRole)> = vids
            .iter()
            .map(|v| (v.clone(), NodeRole::Validator))
            .chain((1..=full).map(|i| (format!("f{i}"), NodeRole::Full)))
            .collect();
        let mut listeners = Vec::new();
        let mut specs = Vec::new();
        for (id, role) in ids {
            let (p, a) = bind_pair().await;
            specs.push(Spec { id, role, p2p: p.local_addr().unwrap(), api: a.local_addr().unwrap() });
            listeners.push((p, a));
        }
        let mut cluster = Cluster { dir, genesis, specs, nodes: BTreeMap::new(), interval, allow_empty };
        for (i, (p, a)) in listeners.into_iter().enumerate() {
            // peers are not serving yet, so skip the startup catch-up
            let cfg = cluster.config(i, false);
            let handle = start_with_listeners(cfg, p, a).await.unwrap();
            cluster.nodes.insert(handle.node_id.clone(), handle);
        }
        cluster
    }

    pub fn index(&self, id: &str) -> usize {
        self.specs.iter().position(|s| s.id == id).unwrap()
    }

    pub fn data_dir(&self, id: &str) -> std::path::PathBuf {
        self.dir.path().join(id)
    }

    pub fn config(&self, i: usize, with_peer_api: bool) -> NodeConfig {
        let me = &self.specs[i];
        let keyring: BTreeMap<String, String> = self
            .specs
            .iter()
            .filter(|s| s.role == NodeRole::Validator)
            .map(|s| (s.id.clone(), secret_for(&s.id).to_hex()))
            .collect();
        NodeConfig {
            node_id: me.id.clone(),
            role: me.role,
            listen: me.p2p,
            api_listen: me.api,
            peers: self
                .specs
                .iter()
                .filter(|s| s.id != me.id)
                .map(|s| PeerConfig {
                    id: s.id.clone(),
                    addr: s.p2p,
                    api: with_peer_api.then(|| format!("http://{}", s.api)),
                })
                .collect(),
            data_dir: self.data_dir(&me.id),
            block_interval: self.interval,
            allow_empty_blocks: self.allow_empty,
            max_txs_per_block: 100,
            min_quotes: 3,
            genesis: Some(self.dir.path().join("genesis.blk")),
            keyring,
            tokens: USERS.iter().map(|(u, _)| (u.to_string(), token(u))).collect(),
        }
    }

    pub async fn stop(&mut self, id: &str) {
        let h = self.nodes.remove(id).expect("running");
        h.shutdown().await;
    }

    pub async fn restart(&mut self, id: &str) -> Result<(), pams_node::NodeError> {
        let i = self.index(id);
        let cfg = self.config(i, true);
        let p = TcpListener::bind(cfg.listen).await.unwrap();
        let a = TcpListener::bind(cfg.api_listen).await.unwrap();
        let h = start_with_listeners(cfg, p, a).await?;
        self.nodes.insert(id.to_owned(), h);
        Ok(())
    }

    pub fn api(&self, id: &str) -> Api {
        Api::new(self.specs[self.index(id)].api)
    }

    /// Waits until every running node is at `height` or above.
    pub async fn wait_height(&self, height: u64, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            if self.nodes.values().all(|n| n.ledger().height() >= height) {
                return true;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        false
    }

    pub async fn shutdown(self) {
        for (_, h) in self.nodes {
            h.shutdown().await;
        }
    }
}

#[derive(Clone)]
pub struct Api {
    client: reqwest::Client,
    pub base: String,
}

impl Api {
    pub fn new(addr: SocketAddr) -> Api {
        let client = reqwest::Client::builder().timeout(Duration::from_secs(5)).build().unwrap();
        Api { client, base: format!("http://{addr}") }
    }

    async fn finish(resp: reqwest::Response) -> (StatusCode, Value) {
        let status = resp.status();
        let body = resp.json().await.unwrap_or(Value::Null);
        (status, body)
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> (StatusCode, Value) {
        let mut req = self.client.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        Self::finish(req.send().await.unwrap()).await
    }

    pub async fn get_as(&self, path: &str, user: &str) -> (StatusCode, Value) {
        self.get(path, Some(&token(user))).await
    }

    pub async fn post_raw(&self, path: &str, user: &str, body: String) -> (StatusCode, Value) {
        let req = self.client.post(format!("{}{path}", self.base)).bearer_auth(token(user)).body(body);
        Self::finish(req.send().await.unwrap()).await
    }

    pub async fn submit(&self, user: &str, payload: &Payload) -> (StatusCode, Value) {
        self.post_raw("/api/tx", user, serde_json::to_string(payload).unwrap()).await
    }

    /// Submits and waits for the transaction to be committed on this node.
    pub async fn commit(&self, user: &str, payload: &Payload, timeout: Duration) -> String {
        let (status, body) = self.submit(user, payload).await;
        assert_eq!(status, StatusCode::ACCEPTED, "{body}");
        let id = body["tx_id"].as_str().unwrap().to_owned();
        assert!(self.wait_tx(&id, timeout).await, "tx {id} not committed");
        id
    }

    pub async fn wait_tx(&self, tx_id: &str, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while Instant::now() < deadline {
            if self.get_as(&format!("/api/documents/{tx_id}"), "admin").await.0 == StatusCode::OK {
                return true;
            }
            tokio::time::sleep(Duration::from_millis(25)).await;
        }
        false
    }
}

/// Ids of one purchase request driven through a passing inspection.
pub struct Procured {
    pub pr: String,
    pub aoc: String,
    pub po: String,
    pub dc: String,
}

fn digest(hex: &str) -> Digest {
    Digest::from_hex(hex).unwrap()
}

/// Laptop x2 and Projector x1, fully delivered and passed, via the API.
pub async fn procure(api: &Api, timeout: Duration) -> Procured {
    let pr = api.commit("emp", &Payload::SubmitPr { lines: two_lines() }, timeout).await;
    api.commit("canv", &Payload::OpenCanvass { pr_id: digest(&pr) }, timeout).await;
    let quotes = quotes_for(2);
    let winner = select_winning_quote(&quotes, &two_lines()).unwrap() as u64;
    let aoc = api
        .commit("canv", &Payload::SubmitAoc { pr_id: digest(&pr), quotes, winner_index: winner }, timeout)
        .await;
    let po = api.commit("canv", &Payload::IssuePo { aoc_id: digest(&aoc) }, timeout).await;
    let lines = [2, 1].map(|received| ReceivedLine { received, remarks: String::new() }).to_vec();
    let dc = api.commit("cust", &Payload::RecordDelivery { po_id: digest(&po), lines }, timeout).await;
    let verdicts = vec![Verdict::Pass, Verdict::Pass];
    api.commit("insp", &Payload::RecordInspection { dc_id: digest(&dc), verdicts }, timeout).await;
    Procured { pr, aoc, po, dc }
}

pub async fn register(api: &Api, p: &Procured, uid: &str, line: u64, timeout: Duration) -> String {
    let payload = Payload::RegisterAsset {
        asset_uid: uid.into(),
        description: format!("unit {uid}"),
        po_id: digest(&p.po),
        line_index: line,
    };
    api.commit("cust", &payload, timeout).await
}
