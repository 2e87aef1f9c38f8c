//! Transport-agnostic consensus and replication engine for one node.
//!
//! A `Replica` is driven by three inputs: `handle_message`, `submit`, and
//! `tick`. It never blocks and never reads a clock; callers pass `now` in
//! milliseconds since the Unix epoch. Output accumulates in an outbox of
//! `(recipient, message)` pairs and an event list, both drained by the host.
//!
//! Protocol per height `h`:
//! - Round 0: the primary `vset[h mod n]` proposes one interval after the
//!   height started. Validators approve at most one block per round and
//!   send the approval to the primary, which commits on a quorum and
//!   broadcasts the certified block.
//! - No commit by 1.5 intervals (round 0) or 1 interval (later rounds):
//!   move to the next round and broadcast `RoundChange` with the lock (the
//!   last approved block). A node seeing a higher round at its height jumps
//!   to it.
//! - The primary of round `r > 0` waits for `RoundChange` from a quorum,
//!   then re-proposes the highest-round locked block among them, or a fresh
//!   block if none is locked.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::audit::{AuditKind, AuditRecord};
use crate::consensus::{
    approval_for, propose_block, quorum, resolve_fork, validate_proposal, ConsensusState,
    DurableConsensus, ForkOutcome, Keyring, Lock, Mempool, Phase, ProposalParams, ProposeError,
    ValidatorSet,
};
use crate::crypto::{verify_tag, Digest, MacSecret};
use crate::ledger::{Approval, Block, Ledger, Transaction};
use crate::p2p::{Body, Message};
use crate::state::{apply_tx, TxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Validator,
    Full,
}

#[derive(Debug, Clone)]
pub struct ReplicaConfig {
    pub node_id: String,
    pub role: NodeRole,
    /// Every other node this one talks to.
    pub peers: Vec<String>,
    pub block_interval_ms: u64,
    pub proposal: ProposalParams,
    pub sync_batch: usize,
}

impl ReplicaConfig {
    pub fn new(node_id: impl Into<String>, role: NodeRole, peers: Vec<String>) -> Self {
        ReplicaConfig {
            node_id: node_id.into(),
            role,
            peers,
            block_interval_ms: 5_000,
            proposal: ProposalParams::default(),
            sync_batch: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub enum ReplicaEvent {
    Committed(Arc<Block>),
    /// A proposal this node declined, with the reason.
    Rejected { height: u64, round: u64, reason: String },
}

pub type Outgoing = (String, Arc<Message>);

pub struct Replica {
    cfg: ReplicaConfig,
    keyring: Keyring,
    secret: Option<MacSecret>,
    ledger: Ledger,
    cs: ConsensusState,
    mempool: Mempool,
    height_started_at: u64,
    round_started_at: u64,
    proposed_in_round: bool,
    round_changes: BTreeMap<String, Option<Lock>>,
    next_sync_at: u64,
    sync_cursor: usize,
    outbox: Vec<Outgoing>,
    events: Vec<ReplicaEvent>,
    audit: Vec<AuditRecord>,
    durable_dirty: bool,
}

impl Replica {
    /// `durable` is the consensus state persisted before a restart; it is
    /// used only if it belongs to the height after the ledger tip.
    pub fn new(
        cfg: ReplicaConfig,
        ledger: Ledger,
        keyring: Keyring,
        durable: Option<DurableConsensus>,
        now: u64,
    ) -> Self {
        let next = ledger.height() + 1;
        let cs = match durable {
            Some(d) if d.height == next => ConsensusState::restore(d),
            _ => ConsensusState::new(next),
        };
        let secret = keyring.get(&cfg.node_id).cloned();
        Replica {
            cfg,
            keyring,
            secret,
            ledger,
            cs,
            mempool: Mempool::new(),
            height_started_at: now,
            round_started_at: now,
            proposed_in_round: false,
            round_changes: BTreeMap::new(),
            next_sync_at: now,
            sync_cursor: 0,
            outbox: Vec::new(),
            events: Vec::new(),
            audit: Vec::new(),
            durable_dirty: true,
        }
    }

    pub fn id(&self) -> &str {
        &self.cfg.node_id
    }

    pub fn config(&self) -> &ReplicaConfig {
        &self.cfg
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn keyring(&self) -> &Keyring {
        &self.keyring
    }

    pub fn consensus(&self) -> &ConsensusState {
        &self.cs
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn durable(&self) -> DurableConsensus {
        self.cs.durable()
    }

    /// True once per change of the durable consensus state.
    pub fn take_durable_dirty(&mut self) -> bool {
        std::mem::take(&mut self.durable_dirty)
    }

    pub fn take_outbox(&mut self) -> Vec<Outgoing> {
        std::mem::take(&mut self.outbox)
    }

    pub fn take_events(&mut self) -> Vec<ReplicaEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn take_audit(&mut self) -> Vec<AuditRecord> {
        std::mem::take(&mut self.audit)
    }

    fn interval(&self) -> u64 {
        self.cfg.block_interval_ms.max(1)
    }

    fn vset(&self) -> ValidatorSet {
        self.ledger.validator_set_at(self.cs.current_height, &self.keyring)
    }

    /// Participates in consensus for the current height.
    pub fn is_active_validator(&self) -> bool {
        self.cfg.role == NodeRole::Validator
            && self.secret.is_some()
            && self.ledger.validator_ids_at(self.cs.current_height).contains(&self.cfg.node_id)
    }

    fn other_validators(&self) -> Vec<String> {
        self.ledger
            .validator_ids_at(self.cs.current_height)
            .iter()
            .filter(|v| **v != self.cfg.node_id)
            .cloned()
            .collect()
    }

    fn send(&mut self, to: &str, body: Body) {
        let msg = Arc::new(Message::new(self.cfg.node_id.clone(), body));
        self.outbox.push((to.to_owned(), msg));
    }

    fn send_all(&mut self, to: &[String], body: Body) {
        let msg = Arc::new(Message::new(self.cfg.node_id.clone(), body));
        for peer in to {
            self.outbox.push((peer.clone(), Arc::clone(&msg)));
        }
    }

    /// Checks a client transaction against committed state, queues it, and
    /// relays it to the validators.
    pub fn submit(&mut self, tx: Transaction) -> Result<(), TxError> {
        if self.ledger.contains_tx(&tx.tx_id) {
            return Err(TxError::DuplicateTransaction);
        }
        apply_tx(self.ledger.state(), &tx)?;
        let validators = self.other_validators();
        if self.is_active_validator() {
            self.mempool.push(tx.clone());
        }
        self.send_all(&validators, Body::SubmitTx(tx));
        Ok(())
    }

    pub fn handle_message(&mut self, from: &str, msg: &Message, now: u64) {
        match &msg.body {
            Body::SubmitTx(tx) => {
                if self.is_active_validator() && !self.ledger.contains_tx(&tx.tx_id) {
                    self.mempool.push(tx.clone());
                }
            }
            Body::Propose { height, round, origin_round, block } => {
                self.on_propose(from, *height, *round, *origin_round, block, now)
            }
            Body::Approve { height, round, validator_id, block_hash, tag } => {
                self.on_approve(*height, *round, validator_id, block_hash, tag, now)
            }
            Body::Commit(block) => self.on_commit_msg(from, block, now),
            Body::SyncRequest { from_height } => self.on_sync_request(from, *from_height),
            Body::SyncResponse(blocks) => self.on_sync_response(from, blocks, now),
            Body::RoundChange { height, round, lock } => {
                self.on_round_change(from, *height, *round, lock.as_ref(), now)
            }
        }
    }

    fn request_sync(&mut self, peer: &str) {
        let from_height = self.ledger.height() + 1;
        self.send(peer, Body::SyncRequest { from_height });
    }

    /// Sends a lagging peer the blocks it is missing.
    fn help_lagging(&mut self, peer: &str, from_height: u64) {
        if from_height <= self.ledger.height() {
            self.on_sync_request(peer, from_height);
        }
    }

    fn on_propose(&mut self, from: &str, height: u64, round: u64, origin_round: u64, block: &Block, now: u64) {
        if !self.is_active_validator() {
            return;
        }
        if height < self.cs.current_height {
            self.help_lagging(from, height);
            return;
        }
        if height > self.cs.current_height {
            self.request_sync(from);
            return;
        }
        if round < self.cs.skip_count || block.height() != height {
            return;
        }
        if round > self.cs.skip_count {
            self.enter_round(round, now);
        }
        if let Err(reason) = validate_proposal(&self.ledger, &self.keyring, block, from, round, origin_round) {
            self.events.push(ReplicaEvent::Rejected { height, round, reason: reason.to_string() });
            return;
        }
        if !self.cs.may_vote(round, &block.block_hash) {
            return;
        }
        self.cs.record_vote(round, origin_round, block);
        self.cs.phase = Phase::Proposed;
        self.cs.pending_proposal = Some(block.clone());
        self.durable_dirty = true;
        let secret = self.secret.clone().expect("active validator has a secret");
        let a = approval_for(&self.cfg.node_id, &secret, &block.block_hash);
        self.send(
            from,
            Body::Approve {
                height,
                round,
                validator_id: a.validator_id,
                block_hash: block.block_hash,
                tag: a.tag,
            },
        );
    }

    fn on_approve(&mut self, height: u64, round: u64, validator: &str, hash: &Digest, tag: &Digest, now: u64) {
        if height != self.cs.current_height || round != self.cs.skip_count {
            return;
        }
        let Some(pending) = &self.cs.pending_proposal else { return };
        if pending.block_hash != *hash || !self.proposed_in_round {
            return;
        }
        let vset = self.vset();
        let valid = vset.secret(validator).is_some_and(|s| verify_tag(s, hash.as_bytes(), tag));
        if !valid {
            return;
        }
        self.cs.approvals_received.insert(validator.to_owned(), *tag);
        self.try_commit_pending(now);
    }

    fn try_commit_pending(&mut self, now: u64) {
        let vset = self.vset();
        if self.cs.approvals_received.len() < vset.quorum() {
            return;
        }
        let Some(mut block) = self.cs.pending_proposal.take() else { return };
        self.cs.phase = Phase::Committing;
        block.certificate.approvals = self
            .cs
            .approvals_received
            .iter()
            .map(|(id, tag)| Approval { validator_id: id.clone(), tag: *tag })
            .collect();
        match self.ledger.append_block(block.clone(), &self.keyring) {
            Ok(()) => {
                self.after_commit(now);
                let peers = self.cfg.peers.clone();
                self.send_all(&peers, Body::Commit(block));
            }
            Err(e) => {
                // unreachable for a validated proposal; drop it and let the round time out
                self.events.push(ReplicaEvent::Rejected {
                    height: block.height(),
                    round: self.cs.skip_count,
                    reason: e.to_string(),
                });
                self.cs.phase = Phase::Idle;
            }
        }
    }

    fn after_commit(&mut self, now: u64) {
        let tip = self.ledger.shared_block(self.ledger.height()).expect("tip exists");
        self.mempool.remove_committed(&tip);
        self.events.push(ReplicaEvent::Committed(tip));
        self.cs = ConsensusState::new(self.ledger.height() + 1);
        self.durable_dirty = true;
        self.height_started_at = now;
        self.round_started_at = now;
        self.proposed_in_round = false;
        self.round_changes.clear();
    }

    /// Appends a certified block received from a peer, or audits it if it
    /// conflicts with a committed one.
    fn accept_certified(&mut self, block: &Block, now: u64) -> Result<bool, String> {
        let height = block.height();
        if height <= self.ledger.height() {
            if let ForkOutcome::SafetyViolation { height, local, candidate } =
                resolve_fork(&self.ledger, block, &self.keyring)
            {
                self.audit.push(AuditRecord::new(
                    now,
                    AuditKind::SafetyViolation,
                    format!("height {height}: local {local} conflicts with certified {candidate}"),
                ));
            }
            return Ok(false);
        }
        match self.ledger.append_block(block.clone(), &self.keyring) {
            Ok(()) => {
                self.after_commit(now);
                Ok(true)
            }
            Err(e) => Err(e.to_string()),
        }
    }

    fn on_commit_msg(&mut self, from: &str, block: &Block, now: u64) {
        if block.height() > self.ledger.height() + 1 {
            self.request_sync(from);
            return;
        }
        // an invalid certified block from a peer is simply not adopted
        let _ = self.accept_certified(block, now);
    }

    fn on_sync_request(&mut self, from: &str, from_height: u64) {
        let end = self.ledger.height().min(from_height.saturating_add(self.cfg.sync_batch as u64 - 1));
        if from_height > end {
            return;
        }
        let blocks: Vec<Block> = (from_height..=end)
            .filter_map(|h| self.ledger.block(h).cloned())
            .collect();
        self.send(from, Body::SyncResponse(blocks));
    }

    fn on_sync_response(&mut self, from: &str, blocks: &[Block], now: u64) {
        let mut appended = 0;
        for block in blocks {
            if block.height() > self.ledger.height() + 1 {
                break;
            }
            match self.accept_certified(block, now) {
                Ok(true) => appended += 1,
                Ok(false) => {}
                Err(reason) => {
                    self.audit.push(AuditRecord::new(
                        now,
                        AuditKind::SyncFailure,
                        format!("block {} from {from}: {reason}", block.height()),
                    ));
                    return;
                }
            }
        }
        if appended > 0 && blocks.len() >= self.cfg.sync_batch {
            self.request_sync(from);
        }
    }

    fn on_round_change(&mut self, from: &str, height: u64, round: u64, lock: Option<&Lock>, now: u64) {
        if !self.is_active_validator() {
            return;
        }
        if height < self.cs.current_height {
            self.help_lagging(from, height);
            return;
        }
        if height > self.cs.current_height {
            self.request_sync(from);
            return;
        }
        if round > self.cs.skip_count {
            self.enter_round(round, now);
        }
        if round == self.cs.skip_count && round > 0 {
            self.round_changes.insert(from.to_owned(), lock.cloned());
            self.try_repropose(now);
        }
    }

    /// Moves to `round` at the current height and announces it.
    fn enter_round(&mut self, round: u64, now: u64) {
        while self.cs.skip_count < round {
            crate::consensus::on_timeout(&mut self.cs);
        }
        self.durable_dirty = true;
        self.round_started_at = now;
        self.proposed_in_round = false;
        self.round_changes.clear();
        let lock = self.cs.lock.clone();
        self.round_changes.insert(self.cfg.node_id.clone(), lock.clone());
        let others = self.other_validators();
        self.send_all(
            &others,
            Body::RoundChange { height: self.cs.current_height, round, lock },
        );
        self.try_repropose(now);
    }

    fn is_primary(&self, round: u64) -> bool {
        self.vset().primary(self.cs.current_height, round) == self.cfg.node_id
    }

    fn try_repropose(&mut self, now: u64) {
        let round = self.cs.skip_count;
        if round == 0 || self.proposed_in_round || !self.is_primary(round) {
            return;
        }
        if self.round_changes.len() < quorum(self.vset().len()) {
            return;
        }
        let best = self
            .round_changes
            .values()
            .flatten()
            .max_by_key(|l| l.round)
            .cloned();
        match best {
            Some(lock) => self.broadcast_proposal(lock.block, lock.origin_round, now),
            None => self.propose_fresh(now),
        }
    }

    fn propose_fresh(&mut self, now: u64) {
        let round = self.cs.skip_count;
        // after a restart, never assemble a second block in a round already voted in
        if let (Some((r, _)), Some(lock)) = (self.cs.voted, self.cs.lock.clone()) {
            if r == round {
                self.broadcast_proposal(lock.block, lock.origin_round, now);
                return;
            }
        }
        let secret = self.secret.clone().expect("active validator has a secret");
        match propose_block(
            &mut self.mempool,
            &self.ledger,
            &self.cfg.node_id,
            &secret,
            &self.keyring,
            round,
            now / 1000,
            self.cfg.proposal,
        ) {
            Ok(block) => self.broadcast_proposal(block, round, now),
            Err(ProposeError::EmptyMempool) => {}
            Err(e) => self.events.push(ReplicaEvent::Rejected {
                height: self.cs.current_height,
                round,
                reason: e.to_string(),
            }),
        }
    }

    fn broadcast_proposal(&mut self, mut block: Block, origin_round: u64, now: u64) {
        let round = self.cs.skip_count;
        if !self.cs.may_vote(round, &block.block_hash) {
            return;
        }
        let secret = self.secret.clone().expect("active validator has a secret");
        let own = approval_for(&self.cfg.node_id, &secret, &block.block_hash);
        block.certificate.approvals = vec![own.clone()];
        self.cs.record_vote(round, origin_round, &block);
        self.durable_dirty = true;
        self.proposed_in_round = true;
        self.cs.phase = Phase::Proposed;
        self.cs.approvals_received.clear();
        self.cs.approvals_received.insert(own.validator_id, own.tag);
        self.cs.pending_proposal = Some(block.clone());
        let others = self.other_validators();
        self.send_all(
            &others,
            Body::Propose { height: self.cs.current_height, round, origin_round, block },
        );
        self.try_commit_pending(now);
    }

    fn timeout_deadline(&self) -> u64 {
        if self.cs.skip_count == 0 {
            self.height_started_at + self.interval() * 3 / 2
        } else {
            self.round_started_at + self.interval()
        }
    }

    fn proposal_due(&self) -> Option<u64> {
        (self.cs.skip_count == 0 && !self.proposed_in_round && self.is_primary(0))
            .then(|| self.height_started_at + self.interval())
    }

    /// Nothing to wait for: empty blocks are disabled and no work is pending.
    fn idle(&self) -> bool {
        !self.cfg.proposal.allow_empty_blocks && self.mempool.is_empty() && self.cs.lock.is_none()
    }

    /// Fires due timers.
    pub fn tick(&mut self, now: u64) {
        if self.is_active_validator() {
            if self.idle() {
                self.height_started_at = now;
                self.round_started_at = now;
            }
            if self.proposal_due().is_some_and(|t| now >= t) {
                self.propose_fresh(now);
            }
            if now >= self.timeout_deadline() {
                let next = self.cs.skip_count + 1;
                self.enter_round(next, now);
            }
        }
        if now >= self.next_sync_at {
            self.next_sync_at = now + 2 * self.interval();
            if !self.cfg.peers.is_empty() {
                let peer = self.cfg.peers[self.sync_cursor % self.cfg.peers.len()].clone();
                self.sync_cursor += 1;
                self.request_sync(&peer);
            }
        }
    }

    /// Earliest time `tick` has work to do.
    pub fn next_wakeup(&self) -> u64 {
        let mut t = self.next_sync_at;
        if self.is_active_validator() {
            if self.idle() {
                return t;
            }
            t = t.min(self.timeout_deadline());
            if let Some(p) = self.proposal_due() {
                t = t.min(p);
            }
        }
        t
    }
}
