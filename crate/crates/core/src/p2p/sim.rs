//! Deterministic discrete-event network simulator.
//!
//! Virtual time in milliseconds. All randomness (link latency) comes from a
//! ChaCha8 generator seeded by the scenario, and simultaneous events run in
//! insertion order, so a scenario always produces the same `SimResult`.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditKind, AuditRecord};
use crate::blocklog::encode_log;
use crate::consensus::{commit_rule, DurableConsensus, Keyring, ProposalParams};
use crate::crypto::{sha3_512, Digest, MacSecret};
use crate::ledger::{make_genesis, Block, Ledger, Transaction};
use crate::p2p::{Message, Transport, TransportError};
use crate::payload::{Payload, Role};
use crate::replica::{NodeRole, Replica, ReplicaConfig, ReplicaEvent};
use crate::state::Rules;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimNode {
    pub id: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Latency {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl Default for Latency {
    fn default() -> Self {
        Latency { min_ms: 5, max_ms: 50 }
    }
}

/// While active, messages between any node of `a` and any node of `b` are
/// dropped in both directions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub start_ms: u64,
    pub end_ms: u64,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crash {
    pub node: String,
    pub at_ms: u64,
    #[serde(default)]
    pub restart_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkItem {
    pub at_ms: u64,
    /// Node the client submits through.
    pub node: String,
    pub author: String,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimUser {
    pub id: String,
    pub roles: Vec<Role>,
}

fn default_interval() -> u64 {
    1_000
}
fn default_true() -> bool {
    true
}
fn default_max_txs() -> usize {
    100
}
fn default_genesis_time() -> u64 {
    1_700_000_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimScenario {
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default = "default_interval")]
    pub block_interval_ms: u64,
    #[serde(default)]
    pub latency: Latency,
    #[serde(default = "default_true")]
    pub allow_empty_blocks: bool,
    #[serde(default = "default_max_txs")]
    pub max_txs_per_block: usize,
    #[serde(default = "default_genesis_time")]
    pub genesis_time: u64,
    pub nodes: Vec<SimNode>,
    /// Registered in genesis. Empty means the fixture users.
    #[serde(default)]
    pub users: Vec<SimUser>,
    #[serde(default)]
    pub partitions: Vec<Partition>,
    #[serde(default)]
    pub crashes: Vec<Crash>,
    #[serde(default)]
    pub workload: Vec<WorkItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Config(String),
    #[error("scenario does not parse: {0}")]
    Parse(String),
    #[error("simulation exceeded {0} events")]
    Runaway(u64),
}

const MAX_EVENTS: u64 = 20_000_000;

impl SimScenario {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let s: SimScenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validator_ids(&self) -> Vec<String> {
        self.nodes.iter().filter(|n| n.role == NodeRole::Validator).map(|n| n.id.clone()).collect()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return bad("empty node id".into());
            }
            if !ids.insert(n.id.as_str()) {
                return bad(format!("duplicate node id {:?}", n.id));
            }
        }
        if self.validator_ids().is_empty() {
            return bad("no validator nodes".into());
        }
        if self.latency.min_ms > self.latency.max_ms {
            return bad("latency min exceeds max".into());
        }
        if self.block_interval_ms == 0 {
            return bad("block interval must be positive".into());
        }
        let known = |id: &String| ids.contains(id.as_str());
        for p in &self.partitions {
            if p.end_ms < p.start_ms {
                return bad("partition ends before it starts".into());
            }
            if let Some(id) = p.a.iter().chain(&p.b).find(|id| !known(id)) {
                return bad(format!("partition names unknown node {id:?}"));
            }
        }
        for c in &self.crashes {
            if !known(&c.node) {
                return bad(format!("crash names unknown node {:?}", c.node));
            }
            if c.restart_ms.is_some_and(|r| r < c.at_ms) {
                return bad("restart before crash".into());
            }
        }
        if let Some(w) = self.workload.iter().find(|w| !known(&w.node)) {
            return bad(format!("workload names unknown node {:?}", w.node));
        }
        Ok(())
    }

    fn bootstrap(&self) -> Vec<Payload> {
        let mut out: Vec<Payload> = if self.users.is_empty() {
            crate::testkit::USERS
                .iter()
                .map(|(id, role)| crate::testkit::user_payload(id, &[*role]))
                .collect()
        } else {
            self.users.iter().map(|u| crate::testkit::user_payload(&u.id, &u.roles)).collect()
        };
        out.extend(self.validator_ids().into_iter().map(|validator_id| Payload::AddValidator { validator_id }));
        out
    }

    /// Validator secrets derived from the seed.
    pub fn keyring(&self) -> Keyring {
        self.validator_ids()
            .into_iter()
            .map(|id| {
                let mut input = self.seed.to_be_bytes().to_vec();
                input.extend_from_slice(id.as_bytes());
                let d = sha3_512(&input);
                let mut bytes = [0u8; 32];
                bytes.copy_from_slice(&d.as_bytes()[..32]);
                (id, MacSecret::from_bytes(bytes))
            })
            .collect()
    }

    pub fn genesis(&self) -> Result<Block, SimError> {
        make_genesis(&self.bootstrap(), self.genesis_time).map_err(|e| SimError::Config(e.to_string()))
    }

    /// True if some partition is active at `t` between `x` and `y`.
    pub fn partitioned(&self, x: &str, y: &str, t: u64) -> bool {
        self.partitions.iter().any(|p| {
            t >= p.start_ms
                && t < p.end_ms
                && ((p.a.iter().any(|n| n == x) && p.b.iter().any(|n| n == y))
                    || (p.a.iter().any(|n| n == y) && p.b.iter().any(|n| n == x)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeOutcome {
    pub role: NodeRole,
    pub alive: bool,
    pub height: u64,
    pub tip: Digest,
    pub state_hash: Digest,
    /// Block log image in the on-disk format.
    #[serde(skip)]
    pub log: Vec<u8>,
    pub audit: Vec<AuditRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommitRecord {
    pub at_ms: u64,
    pub node: String,
    pub height: u64,
    pub hash: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimResult {
    pub nodes: BTreeMap<String, NodeOutcome>,
    pub trace: Vec<String>,
    /// Transaction id to submission time (scenario ms).
    pub submitted: BTreeMap<Digest, u64>,
    /// Transaction id to the first time any node committed it.
    pub committed: BTreeMap<Digest, u64>,
    /// Every block appended by any node, in time order.
    pub commit_log: Vec<CommitRecord>,
    /// Every block observed with a quorum certificate, by height.
    pub certified: BTreeMap<u64, BTreeSet<Digest>>,
    /// Final chain of every node, by node id.
    #[serde(skip)]
    pub chains: BTreeMap<String, Vec<Block>>,
    pub events: u64,
}

impl SimResult {
    pub fn safety_violations(&self) -> usize {
        self.nodes
            .values()
            .flat_map(|n| &n.audit)
            .filter(|a| a.kind == AuditKind::SafetyViolation)
            .count()
    }

    /// Heights where two different blocks were certified.
    pub fn conflicting_heights(&self) -> Vec<u64> {
        self.certified.iter().filter(|(_, s)| s.len() > 1).map(|(h, _)| *h).collect()
    }

    /// All live nodes hold byte-identical logs.
    pub fn converged(&self) -> bool {
        let mut logs = self.nodes.values().filter(|n| n.alive).map(|n| &n.log);
        match logs.next() {
            Some(first) => logs.all(|l| l == first),
            None => true,
        }
    }

    pub fn trace_text(&self) -> String {
        let mut s = self.trace.join("\n");
        s.push('\n');
        s
    }
}

#[derive(Debug)]
enum EventKind {
    Deliver { to: usize, msg: Arc<Message> },
    Timer { node: usize },
    Submit { item: usize },
    Crash { node: usize },
    Restart { node: usize },
}

#[derive(Debug)]
struct Event {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Queue, latency source, and link state shared by every simulated node.
struct Network<'s> {
    scenario: &'s SimScenario,
    t0: u64,
    index: HashMap<String, usize>,
    queue: BinaryHeap<Event>,
    seq: u64,
    rng: ChaCha8Rng,
    last_delivery: HashMap<(usize, usize), u64>,
    alive: Vec<bool>,
    dropped: u64,
}

impl Network<'_> {
    fn push(&mut self, time: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { time, seq: self.seq, kind });
    }

    fn route(&mut self, from: usize, to_id: &str, msg: Arc<Message>, now: u64) -> Result<(), TransportError> {
        let to = *self.index.get(to_id).ok_or_else(|| TransportError::UnknownPeer(to_id.to_owned()))?;
        let from_id = &self.scenario.nodes[from].id;
        if self.scenario.partitioned(from_id, to_id, now - self.t0) {
            self.dropped += 1;
            return Ok(());
        }
        let l = self.scenario.latency;
        let delay = self.rng.gen_range(l.min_ms..=l.max_ms);
        let last = self.last_delivery.entry((from, to)).or_insert(0);
        let at = (now + delay).max(*last);
        *last = at;
        self.push(at, EventKind::Deliver { to, msg });
        Ok(())
    }
}

/// One node's view of the network for a single send batch.
struct SimLink<'a, 's> {
    net: &'a RefCell<Network<'s>>,
    from: usize,
    now: u64,
}

impl Transport for SimLink<'_, '_> {
    fn send(&self, to: &str, msg: Message) -> Result<(), TransportError> {
        self.net.borrow_mut().route(self.from, to, Arc::new(msg), self.now)
    }
}

impl SimLink<'_, '_> {
    fn send_shared(&self, to: &str, msg: Arc<Message>) -> Result<(), TransportError> {
        self.net.borrow_mut().route(self.from, to, msg, self.now)
    }
}

struct Host {
    replica: Option<Replica>,
    /// Committed blocks survive a crash, as the block log would.
    persisted: Vec<Block>,
    durable: Option<DurableConsensus>,
    timer: Option<u64>,
    audit: Vec<AuditRecord>,
}

/// Runs `scenario` to completion.
pub fn run_simulation(scenario: &SimScenario) -> Result<SimResult, SimError> {
    scenario.validate()?;
    let genesis = scenario.genesis()?;
    let keyring = scenario.keyring();
    let t0 = scenario.genesis_time * 1000;
    let n = scenario.nodes.len();
    let all_ids: Vec<String> = scenario.nodes.iter().map(|n| n.id.clone()).collect();

    let make_replica = |i: usize, blocks: &[Block], durable: Option<DurableConsensus>, now: u64| -> Replica {
        let node = &scenario.nodes[i];
        let peers = all_ids.iter().filter(|p| **p != node.id).cloned().collect();
        let mut cfg = ReplicaConfig::new(node.id.clone(), node.role, peers);
        cfg.block_interval_ms = scenario.block_interval_ms;
        cfg.proposal = ProposalParams {
            max_txs_per_block: scenario.max_txs_per_block,
            allow_empty_blocks: scenario.allow_empty_blocks,
        };
        let ledger = Ledger::replay(blocks.iter().cloned(), Rules::default(), &keyring)
            .expect("persisted blocks replay");
        Replica::new(cfg, ledger, keyring.clone(), durable, now)
    };

    let mut hosts: Vec<Host> = (0..n)
        .map(|i| Host {
            replica: Some(make_replica(i, std::slice::from_ref(&genesis), None, t0)),
            persisted: vec![genesis.clone()],
            durable: None,
            timer: None,
            audit: Vec::new(),
        })
        .collect();

    let net = RefCell::new(Network {
        scenario,
        t0,
        index: all_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect(),
        queue: BinaryHeap::new(),
        seq: 0,
        rng: ChaCha8Rng::seed_from_u64(scenario.seed),
        last_delivery: HashMap::new(),
        alive: vec![true; n],
        dropped: 0,
    });
    {
        let mut nw = net.borrow_mut();
        for (i, item) in scenario.workload.iter().enumerate() {
            nw.push(t0 + item.at_ms, EventKind::Submit { item: i });
        }
        for c in &scenario.crashes {
            let node = nw.index[&c.node];
            nw.push(t0 + c.at_ms, EventKind::Crash { node });
            if let Some(r) = c.restart_ms {
                nw.push(t0 + r, EventKind::Restart { node });
            }
        }
        for i in 0..n {
            nw.push(t0, EventKind::Timer { node: i });
            hosts[i].timer = Some(t0);
        }
    }

    let end = t0 + scenario.duration_ms;
    let mut trace = Vec::new();
    let mut submitted = BTreeMap::new();
    let mut committed = BTreeMap::new();
    let mut certified: BTreeMap<u64, BTreeSet<Digest>> = BTreeMap::new();
    let mut commit_log = Vec::new();
    let mut events = 0u64;

    loop {
        let Some(ev) = net.borrow_mut().queue.pop() else { break };
        events += 1;
        if events > MAX_EVENTS {
            return Err(SimError::Runaway(MAX_EVENTS));
        }
        let now = ev.time;
        let draining = now > end;
        let rel = now - t0;
        let node = match ev.kind {
            EventKind::Deliver { to, msg } => {
                let from = &msg.sender_id;
                if !net.borrow().alive[to] || scenario.partitioned(from, &all_ids[to], rel) {
                    continue;
                }
                let r = hosts[to].replica.as_mut().expect("alive node has a replica");
                r.handle_message(from, &msg, now);
                to
            }
            EventKind::Timer { node } => {
                if draining || hosts[node].timer != Some(now) {
                    continue;
                }
                hosts[node].timer = None;
                match hosts[node].replica.as_mut() {
                    Some(r) => r.tick(now),
                    None => continue,
                }
                node
            }
            EventKind::Submit { item } => {
                if draining {
                    continue;
                }
                let w = &scenario.workload[item];
                let node = net.borrow().index[&w.node];
                let tx = Transaction::new(&w.payload, &w.author, now / 1000);
                let Some(r) = hosts[node].replica.as_mut() else {
                    trace.push(format!("{rel} {} submit-dropped {}", w.node, tx.tx_id.short()));
                    continue;
                };
                match r.submit(tx.clone()) {
                    Ok(()) => {
                        submitted.entry(tx.tx_id).or_insert(rel);
                        trace.push(format!("{rel} {} submit {} {}", w.node, tx.tx_type, tx.tx_id.short()));
                    }
                    Err(e) => trace.push(format!("{rel} {} submit-rejected {} {}", w.node, e.code(), tx.tx_id.short())),
                }
                node
            }
            EventKind::Crash { node } => {
                if draining {
                    continue;
                }
                if let Some(r) = hosts[node].replica.take() {
                    hosts[node].durable = Some(r.durable());
                    net.borrow_mut().alive[node] = false;
                    hosts[node].timer = None;
                    trace.push(format!("{rel} {} crash height={}", all_ids[node], r.ledger().height()));
                }
                continue;
            }
            EventKind::Restart { node } => {
                if draining || hosts[node].replica.is_some() {
                    continue;
                }
                let h = &mut hosts[node];
                let r = make_replica(node, &h.persisted, h.durable.take(), now);
                trace.push(format!("{rel} {} restart height={}", all_ids[node], r.ledger().height()));
                h.replica = Some(r);
                net.borrow_mut().alive[node] = true;
                node
            }
        };

        // flush outputs of the node that just ran
        let host = &mut hosts[node];
        let Some(r) = host.replica.as_mut() else { continue };
        let outbox = r.take_outbox();
        for ev in r.take_events() {
            if let ReplicaEvent::Committed(block) = ev {
                let vset = r.ledger().validator_set_at(block.height(), &keyring);
                if commit_rule(&block.certificate, &block.block_hash, &vset) {
                    certified.entry(block.height()).or_default().insert(block.block_hash);
                }
                for tx in &block.transactions {
                    committed.entry(tx.tx_id).or_insert(rel);
                }
                trace.push(format!(
                    "{rel} {} commit h={} {} primary={} txs={}",
                    all_ids[node],
                    block.height(),
                    block.block_hash.short(),
                    block.header.primary_id,
                    block.transactions.len()
                ));
                commit_log.push(CommitRecord {
                    at_ms: rel,
                    node: all_ids[node].clone(),
                    height: block.height(),
                    hash: block.block_hash,
                });
                host.persisted.push((*block).clone());
            }
        }
        for a in r.take_audit() {
            trace.push(format!("{rel} {} audit {:?} {}", all_ids[node], a.kind, a.detail));
            host.audit.push(a);
        }
        let link = SimLink { net: &net, from: node, now };
        for (to, msg) in outbox {
            // unknown recipients are configuration mistakes the replica cannot see; drop them
            let _ = link.send_shared(&to, msg);
        }
        if !draining {
            let wake = r.next_wakeup().max(now + 1);
            if host.timer.map_or(true, |t| wake < t) {
                host.timer = Some(wake);
                net.borrow_mut().push(wake, EventKind::Timer { node });
            }
        }
    }

    let nodes = scenario
        .nodes
        .iter()
        .zip(&hosts)
        .map(|(sn, h)| {
            let ledger_height = h.persisted.len() as u64 - 1;
            let tip = h.persisted.last().expect("genesis").block_hash;
            let state_hash = h
                .replica
                .as_ref()
                .map(|r| r.ledger().state().state_hash())
                .unwrap_or_else(|| {
                    Ledger::replay(h.persisted.iter().cloned(), Rules::default(), &keyring)
                        .expect("persisted blocks replay")
                        .state()
                        .state_hash()
                });
            (
                sn.id.clone(),
                NodeOutcome {
                    role: sn.role,
                    alive: h.replica.is_some(),
                    height: ledger_height,
                    tip,
                    state_hash,
                    log: encode_log(&h.persisted),
                    audit: h.audit.clone(),
                },
            )
        })
        .collect();
    let chains = scenario.nodes.iter().zip(&hosts).map(|(sn, h)| (sn.id.clone(), h.persisted.clone())).collect();
    trace.push(format!("end events={events} dropped={}", net.borrow().dropped));
    Ok(SimResult { nodes, trace, submitted, committed, commit_log, certified, chains, events })
}

/// Workload of `count` independent purchase requests, one per `every_ms`.
pub fn pr_workload(count: usize, start_ms: u64, every_ms: u64, via: &[String]) -> Vec<WorkItem> {
    (0..count)
        .map(|i| WorkItem {
            at_ms: start_ms + i as u64 * every_ms,
            node: via[i % via.len()].clone(),
            author: "emp".into(),
            payload: Payload::SubmitPr {
                lines: vec![crate::payload::LineItem {
                    description: format!("Request item {i}"),
                    quantity: 1 + (i as u64 % 4),
                    unit: "pc".into(),
                    specs: String::new(),
                }],
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(validators: usize, full: usize) -> Vec<SimNode> {
        (1..=validators)
            .map(|i| SimNode { id: format!("v{i}"), role: NodeRole::Validator })
            .chain((1..=full).map(|i| SimNode { id: format!("f{i}"), role: NodeRole::Full }))
            .collect()
    }

    fn base(validators: usize, full: usize) -> SimScenario {
        let nodes = nodes(validators, full);
        let ids: Vec<String> = nodes.iter().map(|n| n.id.clone()).collect();
        SimScenario {
            seed: 7,
            duration_ms: 20_000,
            block_interval_ms: 1_000,
            latency: Latency::default(),
            allow_empty_blocks: true,
            max_txs_per_block: 100,
            genesis_time: 1_700_000_000,
            nodes,
            users: vec![],
            partitions: vec![],
            crashes: vec![],
            workload: pr_workload(10, 500, 700, &ids),
        }
    }

    #[test]
    fn all_online_commits_everything_and_converges() {
        let r = run_simulation(&base(4, 1)).unwrap();
        assert_eq!(r.submitted.len(), 10);
        assert_eq!(r.committed.len(), 10);
        assert!(r.converged());
        assert!(r.conflicting_heights().is_empty());
        assert!(r.nodes["v1"].height >= 15);
    }

    #[test]
    fn same_scenario_same_result() {
        let s = base(3, 0);
        assert_eq!(run_simulation(&s).unwrap(), run_simulation(&s).unwrap());
    }

    #[test]
    fn different_seed_different_trace() {
        let mut s = base(3, 0);
        let a = run_simulation(&s).unwrap();
        s.seed = 8;
        let b = run_simulation(&s).unwrap();
        assert_ne!(a.trace, b.trace);
    }

    #[test]
    fn toml_roundtrip() {
        let s = base(3, 1);
        assert_eq!(SimScenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn malformed_scenarios_rejected() {
        let mut s = base(3, 0);
        s.nodes.push(s.nodes[0].clone());
        assert!(matches!(s.validate(), Err(SimError::Config(_))));
        let mut s = base(3, 0);
        s.workload[0].node = "ghost".into();
        assert!(matches!(s.validate(), Err(SimError::Config(_))));
        assert!(matches!(SimScenario::from_toml("seed = 'x'"), Err(SimError::Parse(_))));
    }

    #[test]
    fn minority_partition_commits_nothing_then_converges() {
        let mut s = base(4, 0);
        s.duration_ms = 40_000;
        s.partitions.push(Partition {
            start_ms: 2_000,
            end_ms: 32_000,
            a: vec!["v4".into()],
            b: vec!["v1".into(), "v2".into(), "v3".into()],
        });
        let r = run_simulation(&s).unwrap();
        let isolated_commits = r
            .commit_log
            .iter()
            .filter(|c| c.node == "v4" && (2_100..32_000).contains(&c.at_ms))
            .count();
        assert_eq!(isolated_commits, 0, "isolated validator committed alone");
        assert!(r.converged());
        assert!(r.conflicting_heights().is_empty());
    }

    #[test]
    fn unknown_peer_is_an_error() {
        let s = base(1, 0);
        let net = RefCell::new(Network {
            scenario: &s,
            t0: 0,
            index: [("v1".to_string(), 0)].into_iter().collect(),
            queue: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
            last_delivery: HashMap::new(),
            alive: vec![true],
            dropped: 0,
        });
        let link = SimLink { net: &net, from: 0, now: 0 };
        let msg = Message::new("v1", crate::p2p::Body::SyncRequest { from_height: 1 });
        assert_eq!(link.send("nobody", msg.clone()), Err(TransportError::UnknownPeer("nobody".into())));
        assert!(link.send("v1", msg).is_ok());
    }

    #[test]
    fn per_link_order_is_fifo() {
        let s = base(2, 0);
        let net = RefCell::new(Network {
            scenario: &s,
            t0: 0,
            index: [("v1".to_string(), 0), ("v2".to_string(), 1)].into_iter().collect(),
            queue: BinaryHeap::new(),
            seq: 0,
            rng: ChaCha8Rng::seed_from_u64(3),
            last_delivery: HashMap::new(),
            alive: vec![true, true],
            dropped: 0,
        });
        let link = SimLink { net: &net, from: 0, now: 0 };
        for h in 0..200 {
            link.send("v2", Message::new("v1", crate::p2p::Body::SyncRequest { from_height: h })).unwrap();
        }
        let mut got = Vec::new();
        while let Some(ev) = net.borrow_mut().queue.pop() {
            if let EventKind::Deliver { msg, .. } = ev.kind {
                if let crate::p2p::Body::SyncRequest { from_height } = msg.body {
                    got.push(from_height);
                }
            }
        }
        assert_eq!(got, (0..200).collect::<Vec<_>>());
    }
}
