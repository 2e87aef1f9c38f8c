//! PP&E registry, memorandum-receipt custody, disposal, and QR labels.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::codec::Encoder;
use crate::crypto::{sha3_512, Digest};
use crate::ledger::Ledger;
use crate::payload::TxKind;
use crate::state::{invariant, State, TxContext, TxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AssetStatus {
    InStock,
    Issued,
    Disposed,
}

impl fmt::Display for AssetStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssetRecord {
    pub asset_uid: String,
    pub description: String,
    pub source_po: Digest,
    pub reg_tx: Digest,
    pub status: AssetStatus,
    pub custodian: Option<String>,
    pub disposal_reason: Option<String>,
}

impl AssetRecord {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.text(&self.asset_uid)
            .text(&self.description)
            .put(&self.source_po)
            .put(&self.reg_tx)
            .u64(self.status as u64)
            .option(self.custodian.as_ref())
            .option(self.disposal_reason.as_ref());
    }
}

/// One memorandum receipt: custody handed to `custodian`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MrRecord {
    pub mr_tx: Digest,
    pub asset_uid: String,
    pub custodian: String,
    pub issued_by: String,
    pub timestamp: u64,
}

impl MrRecord {
    pub(crate) fn encode_into(&self, enc: &mut Encoder) {
        enc.put(&self.mr_tx)
            .text(&self.asset_uid)
            .text(&self.custodian)
            .text(&self.issued_by)
            .u64(self.timestamp);
    }
}

fn wrong_status(a: &AssetRecord) -> TxError {
    TxError::WrongAssetStatus(a.status.to_string())
}

impl State {
    fn asset(&self, uid: &str) -> Result<&AssetRecord, TxError> {
        self.assets.get(uid).ok_or_else(|| TxError::UnknownReference(uid.to_owned()))
    }

    pub(crate) fn register_asset(
        &mut self,
        ctx: &TxContext<'_>,
        asset_uid: &str,
        description: &str,
        po_id: &Digest,
        line_index: u64,
    ) -> Result<(), TxError> {
        let po = self
            .purchase_orders
            .get(po_id)
            .ok_or_else(|| TxError::UnknownReference(po_id.to_hex()))?;
        if !self.inspection_passed(po) {
            return Err(TxError::InspectionNotPassed);
        }
        if self.assets.contains_key(asset_uid) {
            return Err(TxError::DuplicateAssetUid(asset_uid.to_owned()));
        }
        validate_uid(asset_uid)?;
        let line = usize::try_from(line_index)
            .ok()
            .filter(|i| *i < po.lines.len())
            .ok_or_else(|| invariant(format!("order has no line {line_index}")))?;
        let received = self
            .current_inspection(po)
            .and_then(|ir| self.checklists.get(&ir.dc_ref))
            .map_or(0, |dc| dc.lines[line].received);
        if po.registered[line] >= received {
            return Err(invariant(format!(
                "line {line}: all {received} received units already registered"
            )));
        }
        let reg_tx = ctx.tx.tx_id;
        self.purchase_orders.get_mut(po_id).expect("checked").registered[line] += 1;
        self.assets.insert(
            asset_uid.to_owned(),
            AssetRecord {
                asset_uid: asset_uid.to_owned(),
                description: description.to_owned(),
                source_po: *po_id,
                reg_tx,
                status: AssetStatus::InStock,
                custodian: None,
                disposal_reason: None,
            },
        );
        Ok(())
    }

    pub(crate) fn issue_mr(
        &mut self,
        ctx: &TxContext<'_>,
        asset_uid: &str,
        custodian: &str,
    ) -> Result<(), TxError> {
        let asset = self.asset(asset_uid)?;
        if asset.status != AssetStatus::InStock {
            return Err(wrong_status(asset));
        }
        self.hand_over(ctx, asset_uid, custodian)
    }

    pub(crate) fn transfer_custody(
        &mut self,
        ctx: &TxContext<'_>,
        asset_uid: &str,
        to: &str,
    ) -> Result<(), TxError> {
        let asset = self.asset(asset_uid)?;
        if asset.status != AssetStatus::Issued {
            return Err(wrong_status(asset));
        }
        if !self.is_active_user(to) {
            return Err(TxError::UnknownUser(to.to_owned()));
        }
        if asset.custodian.as_deref() == Some(to) {
            return Err(TxError::SelfTransfer);
        }
        self.hand_over(ctx, asset_uid, to)
    }

    fn hand_over(&mut self, ctx: &TxContext<'_>, asset_uid: &str, to: &str) -> Result<(), TxError> {
        if !self.is_active_user(to) {
            return Err(TxError::UnknownUser(to.to_owned()));
        }
        let asset = self.assets.get_mut(asset_uid).expect("checked");
        asset.status = AssetStatus::Issued;
        asset.custodian = Some(to.to_owned());
        self.custody.entry(asset_uid.to_owned()).or_default().push(MrRecord {
            mr_tx: ctx.tx.tx_id,
            asset_uid: asset_uid.to_owned(),
            custodian: to.to_owned(),
            issued_by: ctx.tx.author_id.clone(),
            timestamp: ctx.tx.timestamp,
        });
        Ok(())
    }

    pub(crate) fn dispose_asset(&mut self, asset_uid: &str, reason: &str) -> Result<(), TxError> {
        let asset = self.asset(asset_uid)?;
        if asset.status == AssetStatus::Disposed {
            return Err(wrong_status(asset));
        }
        if reason.trim().is_empty() {
            return Err(invariant("disposal needs a reason"));
        }
        let asset = self.assets.get_mut(asset_uid).expect("checked");
        asset.status = AssetStatus::Disposed;
        asset.custodian = None;
        asset.disposal_reason = Some(reason.to_owned());
        Ok(())
    }

    pub fn custody_history(&self, asset_uid: &str) -> &[MrRecord] {
        self.custody.get(asset_uid).map_or(&[], Vec::as_slice)
    }
}

fn validate_uid(uid: &str) -> Result<(), TxError> {
    if uid.is_empty() {
        return Err(invariant("asset uid must be non-empty"));
    }
    if uid.contains(QR_SEPARATOR) || uid.chars().any(char::is_control) {
        return Err(invariant("asset uid may not contain '|' or control characters"));
    }
    Ok(())
}

pub const QR_VERSION: &str = "PAMS1";
const QR_SEPARATOR: char = '|';
const CHECKSUM_LEN: usize = 8;

/// Decoded label contents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QrPayload {
    pub asset_uid: String,
    pub reg_tx: Digest,
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QrError {
    #[error("unsupported label version {0:?}")]
    BadVersion(String),
    #[error("malformed label: {0}")]
    BadShape(String),
    #[error("label checksum mismatch")]
    ChecksumMismatch,
}

impl QrError {
    pub fn code(&self) -> &'static str {
        match self {
            QrError::BadVersion(_) => "BadVersion",
            QrError::BadShape(_) => "BadShape",
            QrError::ChecksumMismatch => "ChecksumMismatch",
        }
    }
}

/// First 8 lowercase hex chars of SHA3-512 over `PAMS1|<uid>|<reg_tx_hex>`.
pub fn qr_checksum(asset_uid: &str, reg_tx_hex: &str) -> String {
    let body = format!("{QR_VERSION}{QR_SEPARATOR}{asset_uid}{QR_SEPARATOR}{reg_tx_hex}");
    sha3_512(body.as_bytes()).to_hex()[..CHECKSUM_LEN].to_owned()
}

pub fn qr_encode(asset: &AssetRecord) -> String {
    let reg = asset.reg_tx.to_hex();
    let sum = qr_checksum(&asset.asset_uid, &reg);
    format!("{QR_VERSION}|{}|{reg}|{sum}", asset.asset_uid)
}

fn is_lower_hex(s: &str) -> bool {
    s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub fn qr_decode(text: &str) -> Result<QrPayload, QrError> {
    let parts: Vec<&str> = text.split(QR_SEPARATOR).collect();
    if parts[0] != QR_VERSION {
        if parts[0].starts_with("PAMS") {
            return Err(QrError::BadVersion(parts[0].to_owned()));
        }
        return Err(QrError::BadShape("missing PAMS version tag".into()));
    }
    let [_, uid, reg_hex, sum] = parts[..] else {
        return Err(QrError::BadShape(format!("expected 4 fields, found {}", parts.len())));
    };
    if uid.is_empty() || uid.chars().any(char::is_control) {
        return Err(QrError::BadShape("bad asset uid".into()));
    }
    if reg_hex.len() != 128 || !is_lower_hex(reg_hex) {
        return Err(QrError::BadShape("registration hash must be 128 lowercase hex chars".into()));
    }
    if sum.len() != CHECKSUM_LEN || !is_lower_hex(sum) {
        return Err(QrError::BadShape("checksum must be 8 lowercase hex chars".into()));
    }
    if qr_checksum(uid, reg_hex) != sum {
        return Err(QrError::ChecksumMismatch);
    }
    Ok(QrPayload {
        asset_uid: uid.to_owned(),
        reg_tx: Digest::from_hex(reg_hex).expect("shape checked"),
        checksum: sum.to_owned(),
    })
}

/// Renders the label text as a QR symbol (error correction M) in PNG form.
pub fn qr_png(text: &str) -> Vec<u8> {
    use image::{ImageFormat, Luma};
    use qrcode::{EcLevel, QrCode};
    let code = QrCode::with_error_correction_level(text.as_bytes(), EcLevel::M)
        .expect("label text fits a QR symbol");
    let img = code.render::<Luma<u8>>().min_dimensions(256, 256).build();
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG write");
    out.into_inner()
}

/// Result of resolving a scanned label against the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerificationResult {
    pub found: bool,
    /// The label's registration hash is a committed transaction that registered this asset.
    pub reg_tx_confirmed: bool,
    pub status: Option<AssetStatus>,
    pub custodian: Option<String>,
    pub history: Vec<MrRecord>,
    /// Height of the block that registered the asset.
    pub registered_at: Option<u64>,
}

/// Read-only lookup of a label against the chain.
pub fn verify_asset(ledger: &Ledger, payload: &QrPayload) -> VerificationResult {
    let state = ledger.state();
    let Some(asset) = state.assets.get(&payload.asset_uid) else {
        return VerificationResult {
            found: false,
            reg_tx_confirmed: false,
            status: None,
            custodian: None,
            history: Vec::new(),
            registered_at: None,
        };
    };
    let location = ledger.locate_tx(&payload.reg_tx);
    let confirmed = asset.reg_tx == payload.reg_tx
        && location.is_some()
        && ledger
            .transaction(&payload.reg_tx)
            .is_some_and(|tx| tx.tx_type == TxKind::RegisterAsset.name());
    if !confirmed {
        // forged or mismatched label: report nothing about the asset it names
        return VerificationResult {
            found: false,
            reg_tx_confirmed: false,
            status: None,
            custodian: None,
            history: Vec::new(),
            registered_at: None,
        };
    }
    VerificationResult {
        found: true,
        reg_tx_confirmed: true,
        status: Some(asset.status),
        custodian: asset.custodian.clone(),
        history: state.custody_history(&asset.asset_uid).to_vec(),
        registered_at: location.map(|(h, _)| h),
    }
}
