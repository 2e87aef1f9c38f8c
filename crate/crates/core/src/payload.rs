//! Typed transaction payloads.
//!
//! Each payload kind has a versioned `tx_type` name and a fixed canonical field
//! order. Changing a field order means a new `tx_type` name.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::crypto::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Employee,
    Canvasser,
    Inspector,
    PropertyCustodian,
    Administrator,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Employee,
        Role::Canvasser,
        Role::Inspector,
        Role::PropertyCustodian,
        Role::Administrator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Employee => "employee",
            Role::Canvasser => "canvasser",
            Role::Inspector => "inspector",
            Role::PropertyCustodian => "property_custodian",
            Role::Administrator => "administrator",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

impl Canonical for Role {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(self.as_str());
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.text()?.parse().map_err(CodecError::Invalid)
    }
}

fn encode_roles(enc: &mut Encoder, roles: &BTreeSet<Role>) {
    enc.u64(roles.len() as u64);
    for r in roles {
        r.encode(enc);
    }
}

fn decode_roles(dec: &mut Decoder<'_>) -> Result<BTreeSet<Role>, CodecError> {
    let list: Vec<Role> = dec.list()?;
    let set: BTreeSet<Role> = list.iter().copied().collect();
    // sets are encoded sorted and without repeats
    if set.len() != list.len() || !list.windows(2).all(|w| w[0] < w[1]) {
        return Err(CodecError::Invalid("role set not in canonical order".into()));
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineItem {
    pub description: String,
    pub quantity: u64,
    pub unit: String,
    #[serde(default)]
    pub specs: String,
}

impl Canonical for LineItem {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(&self.description).u64(self.quantity).text(&self.unit).text(&self.specs);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(LineItem {
            description: dec.text()?,
            quantity: dec.u64()?,
            unit: dec.text()?,
            specs: dec.text()?,
        })
    }
}

/// One supplier's quote; prices are per unit in minor currency units, one per PR line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    pub supplier: String,
    pub unit_prices: Vec<u64>,
}

impl Canonical for Quote {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(&self.supplier).list(&self.unit_prices);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Quote { supplier: dec.text()?, unit_prices: dec.list()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceivedLine {
    pub received: u64,
    #[serde(default)]
    pub remarks: String,
}

impl Canonical for ReceivedLine {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.received).text(&self.remarks);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(ReceivedLine { received: dec.u64()?, remarks: dec.text()? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { reason: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl Canonical for Verdict {
    fn encode(&self, enc: &mut Encoder) {
        match self {
            Verdict::Pass => enc.u64(0),
            Verdict::Fail { reason } => enc.u64(1).text(reason),
        };
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        match dec.u64()? {
            0 => Ok(Verdict::Pass),
            1 => Ok(Verdict::Fail { reason: dec.text()? }),
            t => Err(CodecError::Invalid(format!("verdict tag {t}"))),
        }
    }
}

/// Every kind of transaction the ledger accepts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tx_type", content = "payload")]
pub enum Payload {
    #[serde(rename = "user.add.v1")]
    AddUser { user_id: String, display_name: String, roles: BTreeSet<Role> },
    #[serde(rename = "user.deactivate.v1")]
    DeactivateUser { user_id: String },
    #[serde(rename = "validator.add.v1")]
    AddValidator { validator_id: String },
    #[serde(rename = "validator.remove.v1")]
    RemoveValidator { validator_id: String },

    #[serde(rename = "pr.submit.v1")]
    SubmitPr { lines: Vec<LineItem> },
    #[serde(rename = "pr.open_canvass.v1")]
    OpenCanvass { pr_id: Digest },
    #[serde(rename = "aoc.submit.v1")]
    SubmitAoc { pr_id: Digest, quotes: Vec<Quote>, winner_index: u64 },
    #[serde(rename = "po.issue.v1")]
    IssuePo { aoc_id: Digest },
    #[serde(rename = "delivery.record.v1")]
    RecordDelivery { po_id: Digest, lines: Vec<ReceivedLine> },
    #[serde(rename = "inspection.record.v1")]
    RecordInspection { dc_id: Digest, verdicts: Vec<Verdict> },
    #[serde(rename = "po.close.v1")]
    ClosePo { po_id: Digest },
    #[serde(rename = "pr.reject.v1")]
    RejectPr { pr_id: Digest, #[serde(default)] reason: String },

    #[serde(rename = "asset.register.v1")]
    RegisterAsset { asset_uid: String, description: String, po_id: Digest, line_index: u64 },
    #[serde(rename = "asset.issue_mr.v1")]
    IssueMr { asset_uid: String, custodian: String },
    #[serde(rename = "asset.transfer.v1")]
    TransferCustody { asset_uid: String, to: String },
    #[serde(rename = "asset.dispose.v1")]
    DisposeAsset { asset_uid: String, reason: String },
}

/// Payload kind without its body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxKind {
    AddUser,
    DeactivateUser,
    AddValidator,
    RemoveValidator,
    SubmitPr,
    OpenCanvass,
    SubmitAoc,
    IssuePo,
    RecordDelivery,
    RecordInspection,
    ClosePo,
    RejectPr,
    RegisterAsset,
    IssueMr,
    TransferCustody,
    DisposeAsset,
}

impl TxKind {
    pub const ALL: [TxKind; 16] = [
        TxKind::AddUser,
        TxKind::DeactivateUser,
        TxKind::AddValidator,
        TxKind::RemoveValidator,
        TxKind::SubmitPr,
        TxKind::OpenCanvass,
        TxKind::SubmitAoc,
        TxKind::IssuePo,
        TxKind::RecordDelivery,
        TxKind::RecordInspection,
        TxKind::ClosePo,
        TxKind::RejectPr,
        TxKind::RegisterAsset,
        TxKind::IssueMr,
        TxKind::TransferCustody,
        TxKind::DisposeAsset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TxKind::AddUser => "user.add.v1",
            TxKind::DeactivateUser => "user.deactivate.v1",
            TxKind::AddValidator => "validator.add.v1",
            TxKind::RemoveValidator => "validator.remove.v1",
            TxKind::SubmitPr => "pr.submit.v1",
            TxKind::OpenCanvass => "pr.open_canvass.v1",
            TxKind::SubmitAoc => "aoc.submit.v1",
            TxKind::IssuePo => "po.issue.v1",
            TxKind::RecordDelivery => "delivery.record.v1",
            TxKind::RecordInspection => "inspection.record.v1",
            TxKind::ClosePo => "po.close.v1",
            TxKind::RejectPr => "pr.reject.v1",
            TxKind::RegisterAsset => "asset.register.v1",
            TxKind::IssueMr => "asset.issue_mr.v1",
            TxKind::TransferCustody => "asset.transfer.v1",
            TxKind::DisposeAsset => "asset.dispose.v1",
        }
    }

    pub fn from_name(name: &str) -> Option<TxKind> {
        TxKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Role an author must hold. Genesis bootstrap transactions are exempt.
    pub fn required_role(self) -> Role {
        match self {
            TxKind::AddUser
            | TxKind::DeactivateUser
            | TxKind::AddValidator
            | TxKind::RemoveValidator
            | TxKind::RejectPr => Role::Administrator,
            TxKind::SubmitPr => Role::Employee,
            TxKind::OpenCanvass | TxKind::SubmitAoc | TxKind::IssuePo => Role::Canvasser,
            TxKind::RecordInspection => Role::Inspector,
            TxKind::RecordDelivery
            | TxKind::ClosePo
            | TxKind::RegisterAsset
            | TxKind::IssueMr
            | TxKind::TransferCustody
            | TxKind::DisposeAsset => Role::PropertyCustodian,
        }
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::AddUser { .. } => TxKind::AddUser,
            Payload::DeactivateUser { .. } => TxKind::DeactivateUser,
            Payload::AddValidator { .. } => TxKind::AddValidator,
            Payload::RemoveValidator { .. } => TxKind::RemoveValidator,
            Payload::SubmitPr { .. } => TxKind::SubmitPr,
            Payload::OpenCanvass { .. } => TxKind::OpenCanvass,
            Payload::SubmitAoc { .. } => TxKind::SubmitAoc,
            Payload::IssuePo { .. } => TxKind::IssuePo,
            Payload::RecordDelivery { .. } => TxKind::RecordDelivery,
            Payload::RecordInspection { .. } => TxKind::RecordInspection,
            Payload::ClosePo { .. } => TxKind::ClosePo,
            Payload::RejectPr { .. } => TxKind::RejectPr,
            Payload::RegisterAsset { .. } => TxKind::RegisterAsset,
            Payload::IssueMr { .. } => TxKind::IssueMr,
            Payload::TransferCustody { .. } => TxKind::TransferCustody,
            Payload::DisposeAsset { .. } => TxKind::DisposeAsset,
        }
    }

    /// Canonical body bytes (the kind is carried separately as `tx_type`).
    pub fn encode_body(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            Payload::AddUser { user_id, display_name, roles } => {
                enc.text(user_id).text(display_name);
                encode_roles(&mut enc, roles);
            }
            Payload::DeactivateUser { user_id } => {
                enc.text(user_id);
            }
            Payload::AddValidator { validator_id } | Payload::RemoveValidator { validator_id } => {
                enc.text(validator_id);
            }
            Payload::SubmitPr { lines } => {
                enc.list(lines);
            }
            Payload::OpenCanvass { pr_id } => {
                enc.put(pr_id);
            }
            Payload::SubmitAoc { pr_id, quotes, winner_index } => {
                enc.put(pr_id).list(quotes).u64(*winner_index);
            }
            Payload::IssuePo { aoc_id } => {
                enc.put(aoc_id);
            }
            Payload::RecordDelivery { po_id, lines } => {
                enc.put(po_id).list(lines);
            }
            Payload::RecordInspection { dc_id, verdicts } => {
                enc.put(dc_id).list(verdicts);
            }
            Payload::ClosePo { po_id } => {
                enc.put(po_id);
            }
            Payload::RejectPr { pr_id, reason } => {
                enc.put(pr_id).text(reason);
            }
            Payload::RegisterAsset { asset_uid, description, po_id, line_index } => {
                enc.text(asset_uid).text(description).put(po_id).u64(*line_index);
            }
            Payload::IssueMr { asset_uid, custodian } => {
                enc.text(asset_uid).text(custodian);
            }
            Payload::TransferCustody { asset_uid, to } => {
                enc.text(asset_uid).text(to);
            }
            Payload::DisposeAsset { asset_uid, reason } => {
                enc.text(asset_uid).text(reason);
            }
        }
        enc.finish()
    }

    pub fn decode_body(kind: TxKind, body: &[u8]) -> Result<Payload, CodecError> {
        let mut dec = Decoder::new(body);
        let d = &mut dec;
        let payload = match kind {
            TxKind::AddUser => Payload::AddUser {
                user_id: d.text()?,
                display_name: d.text()?,
                roles: decode_roles(d)?,
            },
            TxKind::DeactivateUser => Payload::DeactivateUser { user_id: d.text()? },
            TxKind::AddValidator => Payload::AddValidator { validator_id: d.text()? },
            TxKind::RemoveValidator => Payload::RemoveValidator { validator_id: d.text()? },
            TxKind::SubmitPr => Payload::SubmitPr { lines: d.list()? },
            TxKind::OpenCanvass => Payload::OpenCanvass { pr_id: d.get()? },
            TxKind::SubmitAoc => Payload::SubmitAoc {
                pr_id: d.get()?,
                quotes: d.list()?,
                winner_index: d.u64()?,
            },
            TxKind::IssuePo => Payload::IssuePo { aoc_id: d.get()? },
            TxKind::RecordDelivery => Payload::RecordDelivery { po_id: d.get()?, lines: d.list()? },
            TxKind::RecordInspection => {
                Payload::RecordInspection { dc_id: d.get()?, verdicts: d.list()? }
            }
            TxKind::ClosePo => Payload::ClosePo { po_id: d.get()? },
            TxKind::RejectPr => Payload::RejectPr { pr_id: d.get()?, reason: d.text()? },
            TxKind::RegisterAsset => Payload::RegisterAsset {
                asset_uid: d.text()?,
                description: d.text()?,
                po_id: d.get()?,
                line_index: d.u64()?,
            },
            TxKind::IssueMr => Payload::IssueMr { asset_uid: d.text()?, custodian: d.text()? },
            TxKind::TransferCustody => {
                Payload::TransferCustody { asset_uid: d.text()?, to: d.text()? }
            }
            TxKind::DisposeAsset => Payload::DisposeAsset { asset_uid: d.text()?, reason: d.text()? },
        };
        dec.finish()?;
        Ok(payload)
    }
}
