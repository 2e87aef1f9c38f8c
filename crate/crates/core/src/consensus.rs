//! Proof-of-authority primitives: validator sets, rotation, quorum
//! certificates, the mempool, proposal assembly and validation, and the
//! per-height consensus state.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use thiserror::Error;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::crypto::{mac_tag, verify_tag, Digest, MacSecret};
use crate::ledger::{AppendError, Approval, Block, Certificate, CertificatePolicy, Ledger, Transaction};
use crate::state::{ApplyMode, State, TxError};

/// Validator secrets known to this node, keyed by validator id.
#[derive(Debug, Clone, Default)]
pub struct Keyring {
    secrets: BTreeMap<String, MacSecret>,
}

impl Keyring {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, secret: MacSecret) {
        self.secrets.insert(id.into(), secret);
    }

    pub fn get(&self, id: &str) -> Option<&MacSecret> {
        self.secrets.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.secrets.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.secrets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.secrets.is_empty()
    }
}

impl FromIterator<(String, MacSecret)> for Keyring {
    fn from_iter<I: IntoIterator<Item = (String, MacSecret)>>(iter: I) -> Self {
        Keyring { secrets: iter.into_iter().collect() }
    }
}

/// Ordered validators in effect from `effective_from_height`. A secret is
/// `None` when this node was never given it; approvals from that validator
/// then cannot be verified.
#[derive(Debug, Clone)]
pub struct ValidatorSet {
    members: Vec<(String, Option<MacSecret>)>,
    pub effective_from_height: u64,
}

impl ValidatorSet {
    pub fn with_keyring(ids: &[String], effective_from_height: u64, keyring: &Keyring) -> Self {
        ValidatorSet {
            members: ids.iter().map(|id| (id.clone(), keyring.get(id).cloned())).collect(),
            effective_from_height,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.members.iter().map(|(id, _)| id.as_str())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|(m, _)| m == id)
    }

    pub fn secret(&self, id: &str) -> Option<&MacSecret> {
        self.members.iter().find(|(m, _)| m == id).and_then(|(_, s)| s.as_ref())
    }

    pub fn quorum(&self) -> usize {
        quorum(self.len())
    }

    pub fn primary(&self, height: u64, round: u64) -> &str {
        assert!(!self.members.is_empty(), "validator set is empty");
        let n = self.members.len() as u64;
        &self.members[((height % n + round % n) % n) as usize].0
    }
}

/// Strict majority.
pub fn quorum(n: usize) -> usize {
    n / 2 + 1
}

/// `vset[(height + skip_count) mod |V|]`.
pub fn primary_for_height<'a, S: AsRef<str>>(vset: &'a [S], height: u64, skip_count: u64) -> &'a str {
    assert!(!vset.is_empty(), "validator set is empty");
    let n = vset.len() as u64;
    let idx = (height % n + skip_count % n) % n;
    vset[idx as usize].as_ref()
}

pub fn approval_for(validator_id: &str, secret: &MacSecret, block_hash: &Digest) -> Approval {
    Approval { validator_id: validator_id.to_owned(), tag: mac_tag(secret, block_hash.as_bytes()) }
}

fn approval_valid(a: &Approval, block_hash: &Digest, vset: &ValidatorSet) -> bool {
    vset.secret(&a.validator_id)
        .is_some_and(|s| verify_tag(s, block_hash.as_bytes(), &a.tag))
}

/// True iff distinct valid approvals reach the quorum.
pub fn commit_rule(cert: &Certificate, block_hash: &Digest, vset: &ValidatorSet) -> bool {
    let valid: BTreeSet<&str> = cert
        .approvals
        .iter()
        .filter(|a| approval_valid(a, block_hash, vset))
        .map(|a| a.validator_id.as_str())
        .collect();
    valid.len() >= vset.quorum()
}

/// Strict form used on append: every approval must be distinct, from a
/// member, and verify.
pub fn check_certificate(
    cert: &Certificate,
    block_hash: &Digest,
    vset: &ValidatorSet,
) -> Result<(), AppendError> {
    let mut seen = BTreeSet::new();
    for a in &cert.approvals {
        if !seen.insert(a.validator_id.as_str()) {
            return Err(AppendError::BadCertificate(format!("duplicate approval from {:?}", a.validator_id)));
        }
        if !vset.contains(&a.validator_id) {
            return Err(AppendError::BadCertificate(format!("{:?} is not a validator", a.validator_id)));
        }
        if !approval_valid(a, block_hash, vset) {
            return Err(AppendError::BadCertificate(format!("tag from {:?} does not verify", a.validator_id)));
        }
    }
    let need = vset.quorum();
    if seen.len() < need {
        return Err(AppendError::QuorumNotMet { have: seen.len(), need });
    }
    Ok(())
}

/// Pending transactions in arrival order.
#[derive(Debug, Default, Clone)]
pub struct Mempool {
    queue: VecDeque<Transaction>,
    seen: HashSet<Digest>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    /// False if the id was seen before.
    pub fn push(&mut self, tx: Transaction) -> bool {
        if !self.seen.insert(tx.tx_id) {
            return false;
        }
        self.queue.push_back(tx);
        true
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.queue.iter().any(|t| t.tx_id == *id)
    }

    /// Up to `max` transactions that apply in order on top of `state`.
    /// Transactions that fail are evicted.
    pub fn select(&mut self, state: &State, max: usize) -> Vec<Transaction> {
        let mut scratch = state.clone();
        let mut picked = Vec::new();
        let mut kept = VecDeque::with_capacity(self.queue.len());
        for tx in self.queue.drain(..) {
            if picked.len() >= max {
                kept.push_back(tx);
                continue;
            }
            if scratch.apply(&tx, ApplyMode::Normal).is_ok() {
                picked.push(tx.clone());
                kept.push_back(tx);
            }
        }
        self.queue = kept;
        picked
    }

    /// Drops transactions that a committed block included.
    pub fn remove_committed(&mut self, block: &Block) {
        let ids: HashSet<Digest> = block.transactions.iter().map(|t| t.tx_id).collect();
        self.queue.retain(|t| !ids.contains(&t.tx_id));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProposalParams {
    pub max_txs_per_block: usize,
    pub allow_empty_blocks: bool,
}

impl Default for ProposalParams {
    fn default() -> Self {
        ProposalParams { max_txs_per_block: 100, allow_empty_blocks: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposeError {
    #[error("{node:?} is not the primary; {expected:?} is")]
    NotPrimary { node: String, expected: String },
    #[error("no pending transactions")]
    EmptyMempool,
    #[error("no secret for {0:?}")]
    MissingSecret(String),
}

/// Assembles the next block as primary for `(tip + 1, round)` and attaches
/// the primary's own approval.
pub fn propose_block(
    mempool: &mut Mempool,
    ledger: &Ledger,
    node_id: &str,
    secret: &MacSecret,
    keyring: &Keyring,
    round: u64,
    now_secs: u64,
    params: ProposalParams,
) -> Result<Block, ProposeError> {
    let height = ledger.height() + 1;
    let vset = ledger.validator_set_at(height, keyring);
    let expected = vset.primary(height, round);
    if expected != node_id {
        return Err(ProposeError::NotPrimary { node: node_id.to_owned(), expected: expected.to_owned() });
    }
    let txs = mempool.select(ledger.state(), params.max_txs_per_block);
    if txs.is_empty() && !params.allow_empty_blocks {
        return Err(ProposeError::EmptyMempool);
    }
    let mut block = Block::assemble(height, ledger.tip_hash(), now_secs, node_id, txs);
    block.certificate.approvals.push(approval_for(node_id, secret, &block.block_hash));
    Ok(block)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("proposal not from the expected primary")]
    WrongPrimary,
    #[error("height {0} already committed")]
    StaleHeight(u64),
    #[error("height {0} is ahead of the local tip")]
    FutureHeight(u64),
    #[error("previous hash does not match the local tip")]
    PrevHashMismatch,
    #[error("hash does not recompute")]
    BadHash,
    #[error("primary approval missing or invalid")]
    BadPrimaryApproval,
    #[error("transaction {index} invalid: {reason}")]
    InvalidTransaction { index: usize, reason: TxError },
    #[error("block rejected: {0}")]
    Other(String),
}

/// Reviews a proposal received from `sender` in `round`. The block header
/// names the primary of `origin_round`, which is `round` unless a locked
/// block is being carried forward.
pub fn validate_proposal(
    ledger: &Ledger,
    keyring: &Keyring,
    block: &Block,
    sender: &str,
    round: u64,
    origin_round: u64,
) -> Result<(), RejectReason> {
    let height = block.height();
    if height <= ledger.height() {
        return Err(RejectReason::StaleHeight(height));
    }
    if height > ledger.height() + 1 {
        return Err(RejectReason::FutureHeight(height));
    }
    let vset = ledger.validator_set_at(height, keyring);
    if origin_round > round
        || vset.primary(height, round) != sender
        || vset.primary(height, origin_round) != block.header.primary_id
    {
        return Err(RejectReason::WrongPrimary);
    }
    // the proposing primary approves what it sends, carried-forward or not
    let primary_ok = block
        .certificate
        .approvals
        .iter()
        .any(|a| a.validator_id == sender && approval_valid(a, &block.block_hash, &vset));
    match ledger.check_block(block, keyring, CertificatePolicy::Skip) {
        Ok(_) if primary_ok => Ok(()),
        Ok(_) => Err(RejectReason::BadPrimaryApproval),
        Err(AppendError::PrevHashMismatch) => Err(RejectReason::PrevHashMismatch),
        Err(AppendError::BadBlockHash | AppendError::BadTxDigest | AppendError::UnsupportedVersion(_)) => {
            Err(RejectReason::BadHash)
        }
        Err(AppendError::InvalidTransaction { index, reason }) => {
            Err(RejectReason::InvalidTransaction { index, reason })
        }
        Err(e) => Err(RejectReason::Other(e.to_string())),
    }
}

/// A block a validator approved, with the round it approved in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lock {
    pub round: u64,
    /// Round whose primary assembled the block.
    pub origin_round: u64,
    pub block: Block,
}

impl Canonical for Lock {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.round).u64(self.origin_round).put(&self.block);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Lock { round: dec.u64()?, origin_round: dec.u64()?, block: dec.get()? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Proposed,
    Committing,
}

/// Consensus progress for the height being decided.
///
/// `skip_count` is the round number: how many times this height timed out.
/// `lock` and `voted` must survive a restart, otherwise a validator could
/// approve two different blocks in one round.
#[derive(Debug, Clone)]
pub struct ConsensusState {
    pub current_height: u64,
    pub skip_count: u64,
    pub phase: Phase,
    pub pending_proposal: Option<Block>,
    pub approvals_received: BTreeMap<String, Digest>,
    pub lock: Option<Lock>,
    /// (round, block hash) of the latest approval this node gave.
    pub voted: Option<(u64, Digest)>,
}

impl ConsensusState {
    pub fn new(current_height: u64) -> Self {
        ConsensusState {
            current_height,
            skip_count: 0,
            phase: Phase::Idle,
            pending_proposal: None,
            approvals_received: BTreeMap::new(),
            lock: None,
            voted: None,
        }
    }

    /// Whether this node may approve `hash` in `round`.
    pub fn may_vote(&self, round: u64, hash: &Digest) -> bool {
        if round < self.skip_count {
            return false;
        }
        match &self.voted {
            Some((r, h)) if *r == round => h == hash,
            Some((r, _)) => *r < round,
            None => true,
        }
    }

    pub fn record_vote(&mut self, round: u64, origin_round: u64, block: &Block) {
        self.voted = Some((round, block.block_hash));
        self.lock = Some(Lock { round, origin_round, block: block.clone() });
    }

    pub fn durable(&self) -> DurableConsensus {
        DurableConsensus {
            height: self.current_height,
            round: self.skip_count,
            lock: self.lock.clone(),
            voted: self.voted,
        }
    }

    pub fn restore(d: DurableConsensus) -> Self {
        let mut cs = ConsensusState::new(d.height);
        cs.skip_count = d.round;
        cs.lock = d.lock;
        cs.voted = d.voted;
        cs
    }
}

/// Moves to the next round: proposal and approvals are dropped, the lock
/// is kept.
pub fn on_timeout(state: &mut ConsensusState) {
    state.skip_count += 1;
    state.phase = Phase::Idle;
    state.pending_proposal = None;
    state.approvals_received.clear();
}

/// The part of [`ConsensusState`] persisted across restarts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurableConsensus {
    pub height: u64,
    pub round: u64,
    pub lock: Option<Lock>,
    pub voted: Option<(u64, Digest)>,
}

impl Canonical for DurableConsensus {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height).u64(self.round).option(self.lock.as_ref());
        match &self.voted {
            Some((r, h)) => enc.u64(1).u64(*r).put(h),
            None => enc.u64(0),
        };
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let height = dec.u64()?;
        let round = dec.u64()?;
        let lock = dec.option()?;
        let voted = match dec.u64()? {
            0 => None,
            1 => Some((dec.u64()?, dec.get()?)),
            t => return Err(CodecError::Invalid(format!("vote tag {t}"))),
        };
        Ok(DurableConsensus { height, round, lock, voted })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForkOutcome {
    /// The candidate is the block already held.
    Duplicate,
    /// A different block at a committed height carries a valid quorum.
    SafetyViolation { height: u64, local: Digest, candidate: Digest },
    /// A different block without a valid quorum; ignored.
    Rejected,
    /// The height is not committed locally; not a fork question.
    NotCommitted,
}

pub fn resolve_fork(ledger: &Ledger, candidate: &Block, keyring: &Keyring) -> ForkOutcome {
    let height = candidate.height();
    let Some(local) = ledger.block(height) else {
        return ForkOutcome::NotCommitted;
    };
    if local.block_hash == candidate.block_hash {
        return ForkOutcome::Duplicate;
    }
    if height == 0 {
        return ForkOutcome::Rejected;
    }
    let vset = ledger.validator_set_at(height, keyring);
    let hash_ok = crate::ledger::compute_block_hash(&candidate.header) == candidate.block_hash;
    if hash_ok && check_certificate(&candidate.certificate, &candidate.block_hash, &vset).is_ok() {
        ForkOutcome::SafetyViolation { height, local: local.block_hash, candidate: candidate.block_hash }
    } else {
        ForkOutcome::Rejected
    }
}
