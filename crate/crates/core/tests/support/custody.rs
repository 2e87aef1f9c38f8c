//! Randomized asset histories replayed prefix by prefix, and label corruption.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pams_core::assets::{qr_decode, qr_encode, verify_asset, AssetStatus};
use pams_core::ledger::{Block, Ledger};
use pams_core::payload::{LineItem, Payload, Quote, ReceivedLine, Role, Verdict};
use pams_core::procurement::select_winning_quote;
use pams_core::testkit::{user_payload, ChainBuilder};
use pams_core::{Digest, Rules, Transaction};

const HOLDERS: [&str; 6] = ["e1", "e2", "e3", "e4", "emp", "emp2"];

/// Expected custody per asset, tracked alongside the generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expect {
    InStock,
    Issued(String),
    Disposed,
}

pub struct History {
    pub chain: ChainBuilder,
    pub transactions: usize,
    /// Expected asset table after each height.
    pub expected: Vec<BTreeMap<String, Expect>>,
    pub state_hashes: Vec<Digest>,
}

fn lines() -> Vec<LineItem> {
    vec![
        LineItem { description: "Laptop".into(), quantity: 30, unit: "unit".into(), specs: String::new() },
        LineItem { description: "Chair".into(), quantity: 20, unit: "pc".into(), specs: String::new() },
    ]
}

/// A chain holding `total` transactions: user setup, one full procurement
/// run, then random registrations, receipts, transfers, and disposals.
pub fn generate(total: usize, seed: u64) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ChainBuilder::new(3);
    let mut pending: Vec<Transaction> = Vec::new();
    let mut model: BTreeMap<String, Expect> = BTreeMap::new();
    let mut snapshots = vec![model.clone()];
    let mut hashes = vec![b.ledger.state().state_hash()];
    let mut count = 0usize;

    let mut flush = |b: &mut ChainBuilder, pending: &mut Vec<Transaction>, model: &BTreeMap<String, Expect>| {
        if !pending.is_empty() {
            b.push(std::mem::take(pending));
            snapshots.push(model.clone());
            hashes.push(b.ledger.state().state_hash());
        }
    };

    // setup runs one transaction per block so each step sees the last
    for id in &HOLDERS[..4] {
        let tx = b.tx("admin", user_payload(id, &[Role::Employee]));
        pending.push(tx);
        flush(&mut b, &mut pending, &model);
        count += 1;
    }
    let pr = b.tx("emp", Payload::SubmitPr { lines: lines() });
    let pr_id = pr.tx_id;
    let quotes = vec![
        Quote { supplier: "North".into(), unit_prices: vec![900, 40] },
        Quote { supplier: "South".into(), unit_prices: vec![850, 45] },
        Quote { supplier: "East".into(), unit_prices: vec![990, 30] },
    ];
    let winner = select_winning_quote(&quotes, &lines()).unwrap() as u64;
    let mut setup = |b: &mut ChainBuilder, tx: Transaction| {
        let id = tx.tx_id;
        pending.push(tx);
        flush(b, &mut pending, &model);
        count += 1;
        id
    };
    setup(&mut b, pr);
    let tx = b.tx("canv", Payload::OpenCanvass { pr_id });
    setup(&mut b, tx);
    let tx = b.tx("canv", Payload::SubmitAoc { pr_id, quotes, winner_index: winner });
    let aoc_id = setup(&mut b, tx);
    let tx = b.tx("canv", Payload::IssuePo { aoc_id });
    let po_id = setup(&mut b, tx);
    let received = vec![
        ReceivedLine { received: 30, remarks: String::new() },
        ReceivedLine { received: 20, remarks: String::new() },
    ];
    let tx = b.tx("cust", Payload::RecordDelivery { po_id, lines: received });
    let dc_id = setup(&mut b, tx);
    let tx = b.tx("insp", Payload::RecordInspection { dc_id, verdicts: vec![Verdict::Pass, Verdict::Pass] });
    setup(&mut b, tx);

    let mut remaining = [30u64, 20u64];
    let mut next_uid = 0usize;
    let mut block_budget = rng.gen_range(1..=4);
    while count < total {
        let live: Vec<String> = model.iter().filter(|(_, e)| **e != Expect::Disposed).map(|(k, _)| k.clone()).collect();
        let in_stock: Vec<String> = model.iter().filter(|(_, e)| **e == Expect::InStock).map(|(k, _)| k.clone()).collect();
        let issued: Vec<(String, String)> = model
            .iter()
            .filter_map(|(k, e)| match e {
                Expect::Issued(c) => Some((k.clone(), c.clone())),
                _ => None,
            })
            .collect();
        let can_register = remaining.iter().any(|r| *r > 0);
        let roll = rng.gen_range(0..100);
        let tx = if can_register && (roll < 30 || live.is_empty()) {
            let line = if remaining[0] > 0 && (remaining[1] == 0 || rng.gen_bool(0.5)) { 0 } else { 1 };
            remaining[line] -= 1;
            next_uid += 1;
            let uid = format!("PPE-{next_uid:04}");
            model.insert(uid.clone(), Expect::InStock);
            b.tx(
                "cust",
                Payload::RegisterAsset { asset_uid: uid, description: format!("line {line}"), po_id, line_index: line as u64 },
            )
        } else if !in_stock.is_empty() && roll < 60 {
            let uid = in_stock.choose(&mut rng).unwrap().clone();
            let to = HOLDERS.choose(&mut rng).unwrap().to_string();
            model.insert(uid.clone(), Expect::Issued(to.clone()));
            b.tx("cust", Payload::IssueMr { asset_uid: uid, custodian: to })
        } else if !issued.is_empty() && roll < 92 {
            let (uid, from) = issued.choose(&mut rng).unwrap().clone();
            let to = HOLDERS.iter().filter(|h| **h != from).collect::<Vec<_>>().choose(&mut rng).unwrap().to_string();
            model.insert(uid.clone(), Expect::Issued(to.clone()));
            b.tx("cust", Payload::TransferCustody { asset_uid: uid, to })
        } else if let Some(uid) = live.choose(&mut rng).cloned() {
            model.insert(uid.clone(), Expect::Disposed);
            b.tx("cust", Payload::DisposeAsset { asset_uid: uid, reason: "beyond repair".into() })
        } else {
            continue;
        };
        pending.push(tx);
        count += 1;
        block_budget -= 1;
        if block_budget == 0 || count == total {
            flush(&mut b, &mut pending, &model);
            block_budget = rng.gen_range(1..=4);
        }
    }
    flush(&mut b, &mut pending, &model);
    drop(flush);
    History { chain: b, transactions: count, expected: snapshots, state_hashes: hashes }
}

#[derive(Debug, Default)]
pub struct ReplayReport {
    pub heights: usize,
    pub violations: Vec<String>,
}

/// Replays every prefix of the history and checks the single-custodian
/// invariant, the model, and append-only custody history at each height.
pub fn replay_prefixes(h: &History) -> ReplayReport {
    let blocks: Vec<Block> = h.chain.ledger.blocks().cloned().collect();
    let keyring = &h.chain.keyring;
    let mut report = ReplayReport::default();
    let mut prev: Option<Ledger> = None;
    for height in 0..blocks.len() {
        let ledger = match Ledger::replay(blocks[..=height].iter().cloned(), Rules::default(), keyring) {
            Ok(l) => l,
            Err(e) => {
                report.violations.push(format!("h={height}: replay failed: {e}"));
                break;
            }
        };
        report.heights += 1;
        let state = ledger.state();
        if state.state_hash() != h.state_hashes[height] {
            report.violations.push(format!("h={height}: replayed state differs from the live run"));
        }
        let expected = &h.expected[height];
        if state.assets.len() != expected.len() {
            report.violations.push(format!("h={height}: {} assets, expected {}", state.assets.len(), expected.len()));
        }
        for (uid, asset) in &state.assets {
            let history = state.custody_history(uid);
            let ok = match (asset.status, &asset.custodian) {
                (AssetStatus::InStock, None) => history.is_empty(),
                (AssetStatus::Issued, Some(c)) => history.last().is_some_and(|m| &m.custodian == c),
                (AssetStatus::Disposed, None) => true,
                _ => false,
            };
            if !ok {
                report.violations.push(format!("h={height}: {uid} has status {} with custodian {:?}", asset.status, asset.custodian));
            }
            let want = match expected.get(uid) {
                Some(Expect::InStock) => (AssetStatus::InStock, None),
                Some(Expect::Issued(c)) => (AssetStatus::Issued, Some(c.clone())),
                Some(Expect::Disposed) => (AssetStatus::Disposed, None),
                None => {
                    report.violations.push(format!("h={height}: unexpected asset {uid}"));
                    continue;
                }
            };
            if (asset.status, asset.custodian.clone()) != want {
                report.violations.push(format!("h={height}: {uid} is {:?}, model says {want:?}", (asset.status, &asset.custodian)));
            }
            if let Some(p) = &prev {
                let before = p.state().custody_history(uid);
                if !history.starts_with(before) {
                    report.violations.push(format!("h={height}: custody history of {uid} was rewritten"));
                }
            }
        }
        prev = Some(ledger);
    }
    report
}

#[derive(Debug, Default)]
pub struct FuzzReport {
    pub labels: usize,
    pub cases: usize,
    pub silent_accepts: Vec<String>,
    pub lookup_failures: Vec<String>,
}

const ALPHABET: &[u8] = b"0123456789abcdefABCDEF|-PAMSxyz _.";

/// Corrupts labels of every registered asset with single-character
/// substitutions, deletions, and insertions; none may decode.
pub fn qr_fuzz(ledger: &Ledger, cases: usize, seed: u64) -> FuzzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<String> = ledger.state().assets.values().map(qr_encode).collect();
    let mut report = FuzzReport { labels: labels.len(), ..Default::default() };
    let before = ledger.state().state_hash();
    for label in &labels {
        let decoded = qr_decode(label).expect("fresh label decodes");
        let v = verify_asset(ledger, &decoded);
        let asset = &ledger.state().assets[&decoded.asset_uid];
        if !(v.found && v.reg_tx_confirmed && v.status == Some(asset.status) && v.custodian == asset.custodian) {
            report.lookup_failures.push(label.clone());
        }
    }
    for _ in 0..cases {
        let label = labels.choose(&mut rng).expect("at least one label");
        let mut bytes = label.clone().into_bytes();
        let pos = rng.gen_range(0..bytes.len());
        match rng.gen_range(0..3) {
            0 => {
                let orig = bytes[pos];
                let mut c = orig;
                while c == orig {
                    c = *ALPHABET.choose(&mut rng).unwrap();
                }
                bytes[pos] = c;
            }
            1 => {
                bytes.remove(pos);
            }
            _ => bytes.insert(pos, *ALPHABET.choose(&mut rng).unwrap()),
        }
        let corrupted = String::from_utf8(bytes).expect("ascii");
        report.cases += 1;
        if let Ok(p) = qr_decode(&corrupted) {
            report.silent_accepts.push(format!("{corrupted} -> {}", p.asset_uid));
        }
    }
    if ledger.state().state_hash() != before {
        report.lookup_failures.push("verification changed ledger state".into());
    }
    report
}
