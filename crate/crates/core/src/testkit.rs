//! Deterministic fixtures shared by unit tests, integration tests, and the
//! node crate's tests. Not for production use.

use std::collections::BTreeSet;

use crate::consensus::{approval_for, Keyring};
use crate::crypto::{sha3_512, Digest, MacSecret};
use crate::ledger::{make_genesis, Block, Ledger, Transaction};
use crate::payload::{LineItem, Payload, Quote, ReceivedLine, Role, Verdict};
use crate::procurement::select_winning_quote;
use crate::state::{ApplyMode, Rules, State};

pub const GENESIS_TIME: u64 = 1_700_000_000;

/// Hash of `make_genesis(&bootstrap_payloads(), GENESIS_TIME)`.
pub const PINNED_GENESIS_HASH: &str =
    "d62951265af6abd8b30c132f9613b0c63bf2ccdd5cb7807bf269df0809542a1f5d8ceb7b3ac09f2b7482804b7e82818fc51184c6c7eaccc0ab5f33382ff27cb9";

/// Fixture users: (id, role).
pub const USERS: [(&str, Role); 6] = [
    ("admin", Role::Administrator),
    ("emp", Role::Employee),
    ("emp2", Role::Employee),
    ("canv", Role::Canvasser),
    ("insp", Role::Inspector),
    ("cust", Role::PropertyCustodian),
];

pub fn validator_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("v{i}")).collect()
}

/// Secret derived from the id; only for fixtures.
pub fn secret_for(id: &str) -> MacSecret {
    let d = sha3_512(format!("fixture-secret|{id}").as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&d.as_bytes()[..32]);
    MacSecret::from_bytes(bytes)
}

pub fn keyring_for<S: AsRef<str>>(ids: &[S]) -> Keyring {
    ids.iter().map(|id| (id.as_ref().to_owned(), secret_for(id.as_ref()))).collect()
}

pub fn user_payload(id: &str, roles: &[Role]) -> Payload {
    Payload::AddUser {
        user_id: id.to_owned(),
        display_name: id.to_uppercase(),
        roles: roles.iter().copied().collect::<BTreeSet<_>>(),
    }
}

pub fn bootstrap_payloads_with(validators: &[String]) -> Vec<Payload> {
    let mut out: Vec<Payload> = USERS.iter().map(|(id, role)| user_payload(id, &[*role])).collect();
    out.extend(validators.iter().map(|v| Payload::AddValidator { validator_id: v.clone() }));
    out
}

/// Fixture users plus validators v1..v3.
pub fn bootstrap_payloads() -> Vec<Payload> {
    bootstrap_payloads_with(&validator_ids(3))
}

pub fn bootstrap_state() -> State {
    let genesis = make_genesis(&bootstrap_payloads(), GENESIS_TIME).expect("fixture genesis");
    let mut s = State::new(Rules::default());
    for tx in &genesis.transactions {
        s.apply(tx, ApplyMode::Genesis).expect("fixture bootstrap");
    }
    s
}

pub fn admin_tx(author: &str, payload: Payload, timestamp: u64) -> Transaction {
    Transaction::new(&payload, author, timestamp)
}

/// Laptop x2, Projector x1.
pub fn two_lines() -> Vec<LineItem> {
    vec![
        LineItem { description: "Laptop".into(), quantity: 2, unit: "unit".into(), specs: "16GB RAM".into() },
        LineItem { description: "Projector".into(), quantity: 1, unit: "unit".into(), specs: "3000 lm".into() },
    ]
}

/// Three complete quotes pricing `n_lines` lines; the second is cheapest.
pub fn quotes_for(n_lines: usize) -> Vec<Quote> {
    [("Alpha Supply", 100), ("Beta Trading", 90), ("Gamma Office", 95)]
        .iter()
        .map(|(name, base)| Quote {
            supplier: (*name).into(),
            unit_prices: (0..n_lines as u64).map(|i| base * 10 + i).collect(),
        })
        .collect()
}

/// Drives one purchase request through the workflow against a bare state.
pub struct Workflow {
    pub state: State,
    pub applied: usize,
    ts: u64,
    pr: Option<Digest>,
    aoc: Option<Digest>,
    po: Option<Digest>,
    dc: Option<Digest>,
}

impl Default for Workflow {
    fn default() -> Self {
        Self::new()
    }
}

impl Workflow {
    pub fn new() -> Self {
        Workflow { state: bootstrap_state(), applied: 0, ts: GENESIS_TIME, pr: None, aoc: None, po: None, dc: None }
    }

    pub fn tx_as(&mut self, user: &str, payload: Payload) -> Transaction {
        self.ts += 1;
        Transaction::new(&payload, user, self.ts)
    }

    pub fn apply_tx(&mut self, tx: &Transaction) {
        self.state
            .apply(tx, ApplyMode::Normal)
            .unwrap_or_else(|e| panic!("{} failed: {e}", tx.tx_type));
        self.applied += 1;
    }

    pub fn apply_as(&mut self, user: &str, payload: Payload) -> Transaction {
        let tx = self.tx_as(user, payload);
        self.apply_tx(&tx);
        tx
    }

    pub fn pr_id(&self) -> Digest {
        self.pr.expect("no purchase request yet")
    }

    pub fn aoc_id(&self) -> Digest {
        self.aoc.expect("no canvass yet")
    }

    pub fn po_id(&self) -> Digest {
        self.po.expect("no purchase order yet")
    }

    pub fn dc_id(&self) -> Digest {
        self.dc.expect("no delivery yet")
    }

    pub fn submit_pr(&mut self) {
        let tx = self.apply_as("emp", Payload::SubmitPr { lines: two_lines() });
        self.pr = Some(tx.tx_id);
    }

    pub fn open_canvass_tx(&mut self) -> Transaction {
        let pr_id = self.pr_id();
        self.tx_as("canv", Payload::OpenCanvass { pr_id })
    }

    pub fn open_canvass(&mut self) {
        let tx = self.open_canvass_tx();
        self.apply_tx(&tx);
    }

    pub fn aoc_tx(&mut self) -> Transaction {
        let pr_id = self.pr_id();
        let quotes = quotes_for(two_lines().len());
        let winner = select_winning_quote(&quotes, &two_lines()).expect("complete quotes") as u64;
        self.tx_as("canv", Payload::SubmitAoc { pr_id, quotes, winner_index: winner })
    }

    pub fn submit_aoc(&mut self) {
        let tx = self.aoc_tx();
        self.apply_tx(&tx);
        self.aoc = Some(tx.tx_id);
    }

    pub fn po_tx(&mut self) -> Transaction {
        let aoc_id = self.aoc_id();
        self.tx_as("canv", Payload::IssuePo { aoc_id })
    }

    pub fn issue_po(&mut self) {
        let tx = self.po_tx();
        self.apply_tx(&tx);
        self.po = Some(tx.tx_id);
    }

    pub fn delivery_tx(&mut self, received: &[u64]) -> Transaction {
        let po_id = self.po_id();
        let lines = received
            .iter()
            .map(|r| ReceivedLine { received: *r, remarks: String::new() })
            .collect();
        self.tx_as("cust", Payload::RecordDelivery { po_id, lines })
    }

    pub fn record_delivery(&mut self, received: &[u64]) {
        let tx = self.delivery_tx(received);
        self.apply_tx(&tx);
        self.dc = Some(tx.tx_id);
    }

    pub fn inspection_tx(&mut self, pass: bool) -> Transaction {
        let dc_id = self.dc_id();
        let n = self.state.checklists[&dc_id].lines.len();
        let verdicts = (0..n)
            .map(|i| {
                if pass || i > 0 {
                    Verdict::Pass
                } else {
                    Verdict::Fail { reason: "does not meet specs".into() }
                }
            })
            .collect();
        self.tx_as("insp", Payload::RecordInspection { dc_id, verdicts })
    }

    pub fn record_inspection(&mut self, pass: bool) {
        let tx = self.inspection_tx(pass);
        self.apply_tx(&tx);
    }

    pub fn close_tx(&mut self) -> Transaction {
        let po_id = self.po_id();
        self.tx_as("cust", Payload::ClosePo { po_id })
    }

    pub fn close_po(&mut self) {
        let tx = self.close_tx();
        self.apply_tx(&tx);
    }

    /// Submit through inspection with full delivery.
    pub fn through_inspection(&mut self, pass: bool) {
        self.submit_pr();
        self.open_canvass();
        self.submit_aoc();
        self.issue_po();
        self.record_delivery(&[2, 1]);
        self.record_inspection(pass);
    }

    pub fn register_tx(&mut self, uid: &str, line: u64) -> Transaction {
        let po_id = self.po_id();
        self.tx_as(
            "cust",
            Payload::RegisterAsset {
                asset_uid: uid.into(),
                description: format!("unit {uid}"),
                po_id,
                line_index: line,
            },
        )
    }

    pub fn register_asset(&mut self, uid: &str, line: u64) -> Transaction {
        let tx = self.register_tx(uid, line);
        self.apply_tx(&tx);
        tx
    }
}

/// Builds certified chains with fixture validators v1..vn.
pub struct ChainBuilder {
    pub ledger: Ledger,
    pub keyring: Keyring,
    ts: u64,
}

impl ChainBuilder {
    pub fn new(validators: usize) -> Self {
        let ids = validator_ids(validators);
        let genesis = make_genesis(&bootstrap_payloads_with(&ids), GENESIS_TIME).expect("fixture genesis");
        ChainBuilder {
            ledger: Ledger::new(genesis, Rules::default()).expect("fixture ledger"),
            keyring: keyring_for(&ids),
            ts: GENESIS_TIME,
        }
    }

    /// Uncertified next block assembled by the round-0 primary.
    pub fn next_block(&self, txs: Vec<Transaction>) -> Block {
        let height = self.ledger.height() + 1;
        let vset = self.ledger.validator_set_at(height, &self.keyring);
        let primary = vset.primary(height, 0).to_owned();
        Block::assemble(height, self.ledger.tip_hash(), GENESIS_TIME + 5 * height, &primary, txs)
    }

    /// Replaces the certificate with approvals from `k` validators, the
    /// header's primary first.
    pub fn certify(&self, block: &mut Block, k: usize) {
        let vset = self.ledger.validator_set_at(block.height(), &self.keyring);
        let primary = block.header.primary_id.clone();
        let mut ids: Vec<String> = vec![primary.clone()];
        ids.extend(vset.ids().filter(|id| *id != primary).map(str::to_owned));
        block.certificate.approvals = ids
            .iter()
            .take(k)
            .map(|id| approval_for(id, self.keyring.get(id).expect("fixture secret"), &block.block_hash))
            .collect();
    }

    pub fn push(&mut self, txs: Vec<Transaction>) -> &Block {
        let mut block = self.next_block(txs);
        let q = self.ledger.validator_set_at(block.height(), &self.keyring).quorum();
        self.certify(&mut block, q);
        self.ledger.append_block(block, &self.keyring).expect("fixture block");
        self.ledger.tip()
    }

    pub fn push_empty(&mut self) -> &Block {
        self.push(vec![])
    }

    /// A fresh purchase request by `emp`, distinct per `i`.
    pub fn pr_tx(&self, i: u64) -> Transaction {
        let lines = vec![LineItem {
            description: format!("Item {i}"),
            quantity: 1 + i % 5,
            unit: "pc".into(),
            specs: String::new(),
        }];
        Transaction::new(&Payload::SubmitPr { lines }, "emp", GENESIS_TIME + i)
    }

    /// Transaction by `author` with a fresh timestamp.
    pub fn tx(&mut self, author: &str, payload: Payload) -> Transaction {
        self.ts += 1;
        Transaction::new(&payload, author, self.ts)
    }
}
