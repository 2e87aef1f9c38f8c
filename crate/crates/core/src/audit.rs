use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditKind {
    SafetyViolation,
    SyncFailure,
    AuthFailure,
}

/// Append-only record of a security-relevant event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Milliseconds since the Unix epoch (virtual in the simulator).
    pub time_ms: u64,
    pub kind: AuditKind,
    pub detail: String,
}

impl AuditRecord {
    pub fn new(time_ms: u64, kind: AuditKind, detail: impl Into<String>) -> Self {
        AuditRecord { time_ms, kind, detail: detail.into() }
    }
}
