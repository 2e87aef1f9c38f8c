//! HTTP API. JSON bodies, digests as 128-char hex, errors as
//! `{"error": <code>, "message": <text>}`.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use pams_core::assets::{qr_decode, qr_encode, verify_asset};
use pams_core::audit::{AuditKind, AuditRecord};
use pams_core::codec::Canonical;
use pams_core::ledger::{verify_chain, Block, Ledger};
use pams_core::payload::Role;
use pams_core::state::UserRecord;
use pams_core::{Digest, Payload, Transaction, TxError};

use crate::runtime::{now_ms, Shared};

type Shared_ = State<Arc<Shared>>;

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/tx", post(submit_tx))
        .route("/api/blocks/head", get(head))
        .route("/api/blocks/:height", get(block_at))
        .route("/api/chain/verify", get(verify))
        .route("/api/documents/:tx_id", get(document))
        .route("/api/assets/:uid", get(asset))
        .route("/api/assets/:uid/history", get(asset_history))
        .route("/api/verify-qr", post(verify_qr))
        .route("/api/validators", get(validators))
        .route("/api/users", get(users))
        .route("/api/audit", get(audit))
        .route("/api/sync/blocks", get(sync_blocks))
        .with_state(shared)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }

    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownReference", what)
    }
}

impl From<TxError> for ApiError {
    fn from(e: TxError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Resolves the bearer token to an active user. Every failure leaves one
/// AuthFailure audit record.
fn authenticate(shared: &Shared, headers: &HeaderMap, ledger: &Ledger) -> Result<UserRecord, ApiError> {
    let token = headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim);
    let failure = |detail: String| {
        shared.record_audit(AuditRecord::new(now_ms(), AuditKind::AuthFailure, detail));
        ApiError::new(StatusCode::UNAUTHORIZED, "Unauthenticated", "missing, unknown, or inactive token")
    };
    let Some(token) = token else {
        return Err(failure("request without bearer token".into()));
    };
    let Some(user_id) = shared.tokens.get(token) else {
        return Err(failure("unknown bearer token".into()));
    };
    match ledger.state().user(user_id) {
        Some(u) if u.active => Ok(u.clone()),
        Some(_) => Err(failure(format!("token of inactive user {user_id}"))),
        None => Err(failure(format!("token of unregistered user {user_id}"))),
    }
}

fn require_admin(user: &UserRecord) -> Result<(), ApiError> {
    if user.roles.contains(&Role::Administrator) {
        Ok(())
    } else {
        let e = TxError::RoleForbidden(Role::Administrator);
        Err(ApiError::new(StatusCode::FORBIDDEN, e.code(), e.to_string()))
    }
}

fn parse_digest(s: &str) -> Result<Digest, ApiError> {
    Digest::from_hex(s).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BadRequest", format!("{s:?}: {e}")))
}

#[derive(Serialize)]
struct TxView {
    tx_id: Digest,
    tx_type: String,
    author_id: String,
    timestamp: u64,
    payload: Value,
}

fn tx_view(tx: &Transaction) -> TxView {
    let payload = match tx.decode_payload() {
        Ok(p) => serde_json::to_value(&p).map(|v| v["payload"].clone()).unwrap_or(Value::Null),
        Err(_) => Value::Null,
    };
    TxView {
        tx_id: tx.tx_id,
        tx_type: tx.tx_type.clone(),
        author_id: tx.author_id.clone(),
        timestamp: tx.timestamp,
        payload,
    }
}

#[derive(Serialize)]
struct BlockView {
    height: u64,
    block_hash: Digest,
    prev_hash: Digest,
    timestamp: u64,
    primary_id: String,
    tx_digest: Digest,
    transactions: Vec<TxView>,
    approvals: Vec<String>,
}

fn block_view(b: &Block) -> BlockView {
    BlockView {
        height: b.height(),
        block_hash: b.block_hash,
        prev_hash: b.header.prev_hash,
        timestamp: b.header.timestamp,
        primary_id: b.header.primary_id.clone(),
        tx_digest: b.header.tx_digest,
        transactions: b.transactions.iter().map(tx_view).collect(),
        approvals: b.certificate.approvals.iter().map(|a| a.validator_id.clone()).collect(),
    }
}

async fn submit_tx(State(shared): Shared_, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let ledger = shared.snapshot();
    let user = authenticate(&shared, &headers, &ledger)?;
    let payload: Payload = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "MalformedPayload", e.to_string()))?;
    let tx = Transaction::new(&payload, &user.user_id, shared.next_tx_time());
    let tx_id = tx.tx_id;
    let tx_type = tx.tx_type.clone();
    match shared.submit(tx).await {
        Some(Ok(())) => Ok((StatusCode::ACCEPTED, Json(json!({ "tx_id": tx_id, "tx_type": tx_type }))).into_response()),
        Some(Err(e)) => Err(e.into()),
        None => Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "Unavailable", "node is shutting down")),
    }
}

async fn head(State(shared): Shared_, headers: HeaderMap) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let tip = ledger.tip();
    Ok(Json(json!({
        "node_id": shared.node_id,
        "height": tip.height(),
        "block_hash": tip.block_hash,
        "timestamp": tip.header.timestamp,
        "primary_id": tip.header.primary_id,
        "tx_count": tip.transactions.len(),
        "state_hash": ledger.state().state_hash(),
    })))
}

async fn block_at(State(shared): Shared_, headers: HeaderMap, Path(height): Path<u64>) -> Result<Json<BlockView>, ApiError> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let block = ledger.block(height).ok_or_else(|| ApiError::not_found(format!("no block at height {height}")))?;
    Ok(Json(block_view(block)))
}

async fn verify(State(shared): Shared_, headers: HeaderMap) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let blocks: Vec<Block> = ledger.blocks().cloned().collect();
    let report = verify_chain(&blocks, shared.rules, &shared.keyring);
    Ok(Json(serde_json::to_value(report).expect("report serializes")))
}

/// A transaction plus the document it created, if it created one.
async fn document(State(shared): Shared_, headers: HeaderMap, Path(tx_id): Path<String>) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let id = parse_digest(&tx_id)?;
    let tx = ledger.transaction(&id).ok_or_else(|| ApiError::not_found(format!("no transaction {tx_id}")))?;
    let (height, index) = ledger.locate_tx(&id).expect("indexed with the transaction");
    let s = ledger.state();
    let doc = if let Some(d) = s.purchase_requests.get(&id) {
        json!({ "kind": "purchase_request", "record": d })
    } else if let Some(d) = s.canvasses.get(&id) {
        json!({ "kind": "abstract_of_canvass", "record": d })
    } else if let Some(d) = s.purchase_orders.get(&id) {
        json!({ "kind": "purchase_order", "record": d, "inspection_passed": s.inspection_passed(d) })
    } else if let Some(d) = s.checklists.get(&id) {
        json!({ "kind": "delivery_checklist", "record": d })
    } else if let Some(d) = s.inspections.get(&id) {
        json!({ "kind": "inspection_report", "record": d, "passed": d.passed() })
    } else if let Some(a) = s.assets.values().find(|a| a.reg_tx == id) {
        json!({ "kind": "asset", "record": a })
    } else {
        Value::Null
    };
    Ok(Json(json!({ "transaction": tx_view(tx), "height": height, "index": index, "document": doc })))
}

async fn asset(State(shared): Shared_, headers: HeaderMap, Path(uid): Path<String>) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let a = ledger.state().assets.get(&uid).ok_or_else(|| ApiError::not_found(format!("no asset {uid:?}")))?;
    Ok(Json(json!({ "asset": a, "qr": qr_encode(a) })))
}

async fn asset_history(State(shared): Shared_, headers: HeaderMap, Path(uid): Path<String>) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    if !ledger.state().assets.contains_key(&uid) {
        return Err(ApiError::not_found(format!("no asset {uid:?}")));
    }
    Ok(Json(json!({ "asset_uid": uid, "history": ledger.state().custody_history(&uid) })))
}

/// Body is the raw label text.
async fn verify_qr(State(shared): Shared_, headers: HeaderMap, body: String) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let payload = qr_decode(body.trim())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code(), e.to_string()))?;
    let result = verify_asset(&ledger, &payload);
    Ok(Json(json!({ "payload": payload, "result": result })))
}

async fn validators(State(shared): Shared_, headers: HeaderMap) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    authenticate(&shared, &headers, &ledger)?;
    let vset = ledger.next_validator_set(&shared.keyring);
    Ok(Json(json!({
        "height": ledger.height() + 1,
        "validators": vset.ids().collect::<Vec<_>>(),
        "quorum": vset.quorum(),
    })))
}

async fn users(State(shared): Shared_, headers: HeaderMap) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    let user = authenticate(&shared, &headers, &ledger)?;
    require_admin(&user)?;
    let users: Vec<&UserRecord> = ledger.state().users.values().collect();
    Ok(Json(json!({ "users": users })))
}

async fn audit(State(shared): Shared_, headers: HeaderMap) -> ApiResult<Value> {
    let ledger = shared.snapshot();
    let user = authenticate(&shared, &headers, &ledger)?;
    require_admin(&user)?;
    Ok(Json(json!({ "records": shared.audit_records() })))
}

#[derive(Deserialize)]
struct SyncQuery {
    from: u64,
}

/// Unauthenticated; serves verified blocks only.
async fn sync_blocks(State(shared): Shared_, Query(q): Query<SyncQuery>) -> Json<Value> {
    let ledger = shared.snapshot();
    let end = ledger.height().min(q.from.saturating_add(shared.sync_batch as u64 - 1));
    let blocks: Vec<String> = (q.from..=end)
        .filter_map(|h| ledger.block(h))
        .map(|b| hex::encode(b.to_canonical_bytes()))
        .collect();
    Json(json!({ "from": q.from, "height": ledger.height(), "blocks": blocks }))
}
