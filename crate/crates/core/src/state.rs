//! Materialized ledger state and the single transaction entry point.
//!
//! `State::apply` is atomic: every handler validates fully before it mutates.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::assets::{AssetRecord, MrRecord};
use crate::codec::Encoder;
use crate::crypto::{sha3_512, Digest};
use crate::ledger::Transaction;
use crate::payload::{Payload, Role, TxKind};
use crate::procurement::{
    AbstractOfCanvass, DeliveryChecklist, InspectionReport, PurchaseOrder, PurchaseRequest,
};

/// Network-wide workflow parameters. Every node must run with the same values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rules {
    pub min_quotes: usize,
}

impl Default for Rules {
    fn default() -> Self {
        Rules { min_quotes: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("unknown transaction type {0:?}")]
    UnknownTxType(String),
    #[error("transaction id does not match its contents")]
    BadTxId,
    #[error("payload does not decode: {0}")]
    MalformedPayload(String),
    #[error("transaction already applied")]
    DuplicateTransaction,
    #[error("unknown author {0:?}")]
    UnknownAuthor(String),
    #[error("author {0:?} is inactive")]
    InactiveAuthor(String),
    #[error("role {0} required")]
    RoleForbidden(Role),
    #[error("unknown reference {0}")]
    UnknownReference(String),
    #[error("cannot apply {attempted} while {from}")]
    InvalidTransition { from: String, attempted: String },
    #[error("payload invariant violated: {0}")]
    PayloadInvariantViolated(String),
    #[error("inspection has not passed")]
    InspectionNotPassed,
    #[error("asset uid {0:?} already registered")]
    DuplicateAssetUid(String),
    #[error("asset is {0}")]
    WrongAssetStatus(String),
    #[error("unknown or inactive user {0:?}")]
    UnknownUser(String),
    #[error("asset already held by that custodian")]
    SelfTransfer,
    #[error("user {0:?} already exists")]
    DuplicateUser(String),
    #[error("validator {0:?} already registered")]
    DuplicateValidator(String),
    #[error("unknown validator {0:?}")]
    UnknownValidator(String),
    #[error("cannot remove the last validator")]
    CannotRemoveLastValidator,
}

impl TxError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            TxError::UnknownTxType(_) => "UnknownTxType",
            TxError::BadTxId => "BadTxId",
            TxError::MalformedPayload(_) => "MalformedPayload",
            TxError::DuplicateTransaction => "DuplicateTransaction",
            TxError::UnknownAuthor(_) => "UnknownAuthor",
            TxError::InactiveAuthor(_) => "InactiveAuthor",
            TxError::RoleForbidden(_) => "RoleForbidden",
            TxError::UnknownReference(_) => "UnknownReference",
            TxError::InvalidTransition { .. } => "InvalidTransition",
            TxError::PayloadInvariantViolated(_) => "PayloadInvariantViolated",
            TxError::InspectionNotPassed => "InspectionNotPassed",
            TxError::DuplicateAssetUid(_) => "DuplicateAssetUid",
            TxError::WrongAssetStatus(_) => "WrongAssetStatus",
            TxError::UnknownUser(_) => "UnknownUser",
            TxError::SelfTransfer => "SelfTransfer",
            TxError::DuplicateUser(_) => "DuplicateUser",
            TxError::DuplicateValidator(_) => "DuplicateValidator",
            TxError::UnknownValidator(_) => "UnknownValidator",
            TxError::CannotRemoveLastValidator => "CannotRemoveLastValidator",
        }
    }
}

pub(crate) fn invariant(detail: impl Into<String>) -> TxError {
    TxError::PayloadInvariantViolated(detail.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserRecord {
    pub user_id: String,
    pub display_name: String,
    pub roles: BTreeSet<Role>,
    pub active: bool,
}

impl UserRecord {
    fn encode_into(&self, enc: &mut Encoder) {
        enc.text(&self.user_id).text(&self.display_name);
        enc.u64(self.roles.len() as u64);
        for r in &self.roles {
            enc.text(r.as_str());
        }
        enc.bool(self.active);
    }
}

/// Whether author and role checks apply. Bootstrap transactions in the
/// genesis block run before any administrator exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyMode {
    Normal,
    Genesis,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct State {
    pub rules: Rules,
    pub users: BTreeMap<String, UserRecord>,
    /// Registration order; rotation follows it.
    pub validators: Vec<String>,
    pub purchase_requests: BTreeMap<Digest, PurchaseRequest>,
    pub canvasses: BTreeMap<Digest, AbstractOfCanvass>,
    pub purchase_orders: BTreeMap<Digest, PurchaseOrder>,
    pub checklists: BTreeMap<Digest, DeliveryChecklist>,
    pub inspections: BTreeMap<Digest, InspectionReport>,
    pub assets: BTreeMap<String, AssetRecord>,
    pub custody: BTreeMap<String, Vec<MrRecord>>,
    #[serde(skip)]
    pub applied: BTreeSet<Digest>,
}

impl State {
    pub fn new(rules: Rules) -> Self {
        State { rules, ..Default::default() }
    }

    pub fn rules(&self) -> Rules {
        self.rules
    }

    pub fn user(&self, id: &str) -> Option<&UserRecord> {
        self.users.get(id)
    }

    pub fn is_active_user(&self, id: &str) -> bool {
        self.users.get(id).is_some_and(|u| u.active)
    }

    /// Applies one transaction in place; on error the state is untouched.
    pub fn apply(&mut self, tx: &Transaction, mode: ApplyMode) -> Result<(), TxError> {
        let payload = tx.decode_payload()?;
        if self.applied.contains(&tx.tx_id) {
            return Err(TxError::DuplicateTransaction);
        }
        if mode == ApplyMode::Normal {
            self.check_author(&tx.author_id, payload.kind().required_role())?;
        }
        let ctx = TxContext { tx };
        match &payload {
            Payload::AddUser { user_id, display_name, roles } => {
                self.add_user(user_id, display_name, roles)
            }
            Payload::DeactivateUser { user_id } => self.deactivate_user(user_id),
            Payload::AddValidator { validator_id } => self.add_validator(validator_id),
            Payload::RemoveValidator { validator_id } => self.remove_validator(validator_id),
            Payload::SubmitPr { lines } => self.submit_pr(&ctx, lines),
            Payload::OpenCanvass { pr_id } => self.open_canvass(pr_id),
            Payload::SubmitAoc { pr_id, quotes, winner_index } => {
                self.submit_aoc(&ctx, pr_id, quotes, *winner_index)
            }
            Payload::IssuePo { aoc_id } => self.issue_po(&ctx, aoc_id),
            Payload::RecordDelivery { po_id, lines } => self.record_delivery(&ctx, po_id, lines),
            Payload::RecordInspection { dc_id, verdicts } => {
                self.record_inspection(&ctx, dc_id, verdicts)
            }
            Payload::ClosePo { po_id } => self.close_po(po_id),
            Payload::RejectPr { pr_id, .. } => self.reject_pr(pr_id),
            Payload::RegisterAsset { asset_uid, description, po_id, line_index } => {
                self.register_asset(&ctx, asset_uid, description, po_id, *line_index)
            }
            Payload::IssueMr { asset_uid, custodian } => self.issue_mr(&ctx, asset_uid, custodian),
            Payload::TransferCustody { asset_uid, to } => {
                self.transfer_custody(&ctx, asset_uid, to)
            }
            Payload::DisposeAsset { asset_uid, reason } => self.dispose_asset(asset_uid, reason),
        }?;
        self.applied.insert(tx.tx_id);
        Ok(())
    }

    fn check_author(&self, author: &str, role: Role) -> Result<(), TxError> {
        let user = self
            .users
            .get(author)
            .ok_or_else(|| TxError::UnknownAuthor(author.to_owned()))?;
        if !user.active {
            return Err(TxError::InactiveAuthor(author.to_owned()));
        }
        if !user.roles.contains(&role) {
            return Err(TxError::RoleForbidden(role));
        }
        Ok(())
    }

    fn add_user(
        &mut self,
        user_id: &str,
        display_name: &str,
        roles: &BTreeSet<Role>,
    ) -> Result<(), TxError> {
        if self.users.contains_key(user_id) {
            return Err(TxError::DuplicateUser(user_id.to_owned()));
        }
        if user_id.is_empty() {
            return Err(invariant("user id must be non-empty"));
        }
        if roles.is_empty() {
            return Err(invariant("user needs at least one role"));
        }
        self.users.insert(
            user_id.to_owned(),
            UserRecord {
                user_id: user_id.to_owned(),
                display_name: display_name.to_owned(),
                roles: roles.clone(),
                active: true,
            },
        );
        Ok(())
    }

    fn deactivate_user(&mut self, user_id: &str) -> Result<(), TxError> {
        let user = self
            .users
            .get_mut(user_id)
            .ok_or_else(|| TxError::UnknownUser(user_id.to_owned()))?;
        if !user.active {
            return Err(TxError::InvalidTransition {
                from: "user inactive".into(),
                attempted: TxKind::DeactivateUser.name().into(),
            });
        }
        user.active = false;
        Ok(())
    }

    fn add_validator(&mut self, id: &str) -> Result<(), TxError> {
        if id.is_empty() {
            return Err(invariant("validator id must be non-empty"));
        }
        if self.validators.iter().any(|v| v == id) {
            return Err(TxError::DuplicateValidator(id.to_owned()));
        }
        self.validators.push(id.to_owned());
        Ok(())
    }

    fn remove_validator(&mut self, id: &str) -> Result<(), TxError> {
        let pos = self
            .validators
            .iter()
            .position(|v| v == id)
            .ok_or_else(|| TxError::UnknownValidator(id.to_owned()))?;
        if self.validators.len() == 1 {
            return Err(TxError::CannotRemoveLastValidator);
        }
        self.validators.remove(pos);
        Ok(())
    }

    /// Canonical encoding of the whole materialized state.
    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(self.rules.min_quotes as u64);
        enc.u64(self.users.len() as u64);
        for u in self.users.values() {
            u.encode_into(&mut enc);
        }
        enc.list(&self.validators);
        enc.u64(self.purchase_requests.len() as u64);
        for pr in self.purchase_requests.values() {
            pr.encode_into(&mut enc);
        }
        enc.u64(self.canvasses.len() as u64);
        for a in self.canvasses.values() {
            a.encode_into(&mut enc);
        }
        enc.u64(self.purchase_orders.len() as u64);
        for po in self.purchase_orders.values() {
            po.encode_into(&mut enc);
        }
        enc.u64(self.checklists.len() as u64);
        for dc in self.checklists.values() {
            dc.encode_into(&mut enc);
        }
        enc.u64(self.inspections.len() as u64);
        for ir in self.inspections.values() {
            ir.encode_into(&mut enc);
        }
        enc.u64(self.assets.len() as u64);
        for a in self.assets.values() {
            a.encode_into(&mut enc);
        }
        enc.u64(self.custody.len() as u64);
        for (uid, history) in &self.custody {
            enc.text(uid).u64(history.len() as u64);
            for mr in history {
                mr.encode_into(&mut enc);
            }
        }
        enc.u64(self.applied.len() as u64);
        for id in &self.applied {
            enc.put(id);
        }
        enc.finish()
    }

    pub fn state_hash(&self) -> Digest {
        sha3_512(&self.encode())
    }
}

/// Per-transaction data handlers need besides the payload.
pub(crate) struct TxContext<'a> {
    pub tx: &'a Transaction,
}

/// Pure form of [`State::apply`].
pub fn apply_tx(state: &State, tx: &Transaction) -> Result<State, TxError> {
    let mut next = state.clone();
    next.apply(tx, ApplyMode::Normal)?;
    Ok(next)
}
