//! Seeded fault scenarios for the simulator and the checks run on them.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pams_core::consensus::quorum;
use pams_core::p2p::sim::{pr_workload, Crash, Latency, Partition, SimNode, SimResult, SimScenario};
use pams_core::replica::NodeRole;

pub const INTERVAL_MS: u64 = 1_000;

pub fn nodes(validators: usize, full: usize) -> Vec<SimNode> {
    (1..=validators)
        .map(|i| SimNode { id: format!("v{i}"), role: NodeRole::Validator })
        .chain((1..=full).map(|i| SimNode { id: format!("f{i}"), role: NodeRole::Full }))
        .collect()
}

fn base(seed: u64, validators: usize, full: usize) -> SimScenario {
    SimScenario {
        seed,
        duration_ms: 0,
        block_interval_ms: INTERVAL_MS,
        latency: Latency::default(),
        allow_empty_blocks: true,
        max_txs_per_block: 100,
        genesis_time: 1_700_000_000,
        nodes: nodes(validators, full),
        users: Vec::new(),
        partitions: Vec::new(),
        crashes: Vec::new(),
        workload: Vec::new(),
    }
}

fn ids(s: &SimScenario) -> Vec<String> {
    s.nodes.iter().map(|n| n.id.clone()).collect()
}

/// `validators` validators plus one full node, up to two sequential random
/// partitions, up to floor(n/2) crashed validators, and at least three
/// healed, quiet intervals at the end.
pub fn fault_scenario(validators: usize, seed: u64) -> SimScenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = base(seed, validators, 1);
    let all = ids(&s);
    let mut last_fault = 0u64;

    let mut t = rng.gen_range(1_000..4_000);
    for _ in 0..rng.gen_range(0..=2) {
        let mut shuffled = all.clone();
        shuffled.shuffle(&mut rng);
        let cut = rng.gen_range(1..shuffled.len());
        let len = rng.gen_range(2_000..8_000);
        s.partitions.push(Partition {
            start_ms: t,
            end_ms: t + len,
            a: shuffled[..cut].to_vec(),
            b: shuffled[cut..].to_vec(),
        });
        last_fault = t + len;
        t += len + rng.gen_range(500..3_000);
    }

    let validator_ids = s.validator_ids();
    let crashes = rng.gen_range(0..=validators / 2);
    for node in validator_ids.choose_multiple(&mut rng, crashes) {
        let at = rng.gen_range(1_000..12_000);
        let restart = rng.gen_bool(0.6).then(|| at + rng.gen_range(1_000..8_000));
        last_fault = last_fault.max(restart.unwrap_or(at));
        s.crashes.push(Crash { node: node.clone(), at_ms: at, restart_ms: restart });
    }

    let quiet = rng.gen_range(3..=6) * INTERVAL_MS;
    s.duration_ms = (last_fault + quiet).max(15_000);
    let every = 700 + rng.gen_range(0..600);
    let count = ((s.duration_ms - quiet) / every).min(12) as usize;
    s.workload = pr_workload(count, 300, every, &all);
    s
}

/// Every node up, one transaction every `every_ms`.
pub fn online_scenario(validators: usize, txs: usize, every_ms: u64, seed: u64) -> SimScenario {
    let mut s = base(seed, validators, 1);
    let all = ids(&s);
    s.workload = pr_workload(txs, 500, every_ms, &all);
    s.duration_ms = 500 + txs as u64 * every_ms + 4 * INTERVAL_MS;
    s
}

/// Four validators and a full node; `victim` is down from 5 s to 20 s.
pub fn spof_scenario(victim: &str, seed: u64) -> SimScenario {
    let mut s = base(seed, 4, 1);
    let all = ids(&s);
    s.crashes.push(Crash { node: victim.into(), at_ms: 5_000, restart_ms: Some(20_000) });
    let via: Vec<String> = all.into_iter().filter(|id| id != victim).collect();
    s.workload = pr_workload(20, 1_000, 1_200, &via);
    s.duration_ms = 32_000;
    s
}

/// Highest height `node` had appended at or before `t`.
fn height_at(r: &SimResult, node: &str, t: u64) -> u64 {
    r.commit_log
        .iter()
        .filter(|c| c.node == node && c.at_ms <= t)
        .map(|c| c.height)
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Default, Clone)]
pub struct Verdicts {
    pub safety: Vec<String>,
    pub convergence: Vec<String>,
    pub partition: Vec<String>,
    /// Partition sides that lacked a quorum and were checked.
    pub minority_sides: usize,
}

/// Safety, convergence, and partition honesty for one finished run.
pub fn judge(s: &SimScenario, r: &SimResult) -> Verdicts {
    let mut v = Verdicts::default();
    let tag = format!("seed={} n={}", s.seed, s.validator_ids().len());
    if r.safety_violations() > 0 {
        v.safety.push(format!("{tag}: {} safety audit records", r.safety_violations()));
    }
    if !r.conflicting_heights().is_empty() {
        v.safety.push(format!("{tag}: conflicting certified blocks at {:?}", r.conflicting_heights()));
    }
    // two nodes never hold different blocks at the same height
    let mut seen: BTreeMap<u64, &pams_core::Digest> = BTreeMap::new();
    for c in &r.commit_log {
        if let Some(prev) = seen.insert(c.height, &c.hash) {
            if *prev != c.hash {
                v.safety.push(format!("{tag}: {} appended a different block at h={}", c.node, c.height));
            }
        }
    }
    if !r.converged() {
        let heights: Vec<String> =
            r.nodes.iter().filter(|(_, n)| n.alive).map(|(id, n)| format!("{id}@{}", n.height)).collect();
        v.convergence.push(format!("{tag}: live logs differ ({})", heights.join(" ")));
    }
    let q = quorum(s.validator_ids().len());
    let validators = s.validator_ids();
    for p in &s.partitions {
        for side in [&p.a, &p.b] {
            let members = side.iter().filter(|id| validators.contains(id)).count();
            if members >= q {
                continue;
            }
            v.minority_sides += 1;
            let before = side.iter().map(|id| height_at(r, id, p.start_ms)).max().unwrap_or(0);
            for c in &r.commit_log {
                if side.contains(&c.node) && c.at_ms > p.start_ms && c.at_ms < p.end_ms && c.height > before {
                    v.partition.push(format!(
                        "{tag}: {} committed h={} at {} ms inside a minority partition",
                        c.node, c.height, c.at_ms
                    ));
                }
            }
        }
    }
    v
}
