//! On-disk state under the data directory: the block log, the consensus
//! durable state, and the audit trail.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use pams_core::audit::AuditRecord;
use pams_core::blocklog::BlockLog;
use pams_core::codec::Canonical;
use pams_core::consensus::{DurableConsensus, Keyring};
use pams_core::ledger::{Block, Ledger, ReplayError};
use pams_core::Rules;

use crate::error::NodeError;

pub const LOG_FILE: &str = "blocks.log";
const DURABLE_FILE: &str = "consensus.state";
const AUDIT_FILE: &str = "audit.jsonl";

pub struct Store {
    dir: PathBuf,
    log: BlockLog,
}

/// Append-only audit records, in memory and on disk.
pub struct AuditTrail {
    records: Vec<AuditRecord>,
    file: File,
}

/// What a restart recovered from disk.
pub struct Recovered {
    pub store: Store,
    pub ledger: Ledger,
    pub durable: Option<DurableConsensus>,
    pub audit: AuditTrail,
    /// A partially written final record was cut off.
    pub truncated_tail: bool,
}

/// Opens the data directory and rebuilds the ledger from the block log,
/// verifying every block. `genesis` seeds an empty log and must match a
/// non-empty one.
pub fn recover(dir: &Path, genesis: Option<Block>, rules: Rules, keyring: &Keyring) -> Result<Recovered, NodeError> {
    fs::create_dir_all(dir)?;
    let (mut log, parsed) = BlockLog::open(&dir.join(LOG_FILE))?;
    let mut blocks = parsed.blocks;
    match (blocks.first(), genesis) {
        (None, Some(g)) => {
            log.append(&g)?;
            blocks.push(g);
        }
        (None, None) => return Err(NodeError::Genesis("empty log and no genesis block".into())),
        (Some(first), Some(g)) if first.block_hash != g.block_hash => {
            return Err(NodeError::Config(format!(
                "log genesis {} differs from configured genesis {}",
                first.block_hash.short(),
                g.block_hash.short()
            )))
        }
        (Some(_), _) => {}
    }
    let ledger = Ledger::replay(blocks, rules, keyring).map_err(|e| match e {
        ReplayError::Block { height, error } => NodeError::CorruptLog { height, detail: error.to_string() },
        ReplayError::Empty => NodeError::CorruptLog { height: 0, detail: "empty".into() },
    })?;

    let durable_path = dir.join(DURABLE_FILE);
    let durable = match fs::read(&durable_path) {
        Ok(bytes) => Some(DurableConsensus::from_canonical_bytes(&bytes).map_err(|e| {
            NodeError::Config(format!("{} is unreadable: {e}", durable_path.display()))
        })?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };

    let audit_path = dir.join(AUDIT_FILE);
    let mut records = Vec::new();
    if audit_path.exists() {
        for line in BufReader::new(File::open(&audit_path)?).lines() {
            let line = line?;
            // a torn last line from a crash is skipped
            if let Ok(rec) = serde_json::from_str(&line) {
                records.push(rec);
            }
        }
    }
    let file = OpenOptions::new().create(true).append(true).open(&audit_path)?;

    Ok(Recovered {
        store: Store { dir: dir.to_owned(), log },
        ledger,
        durable,
        audit: AuditTrail { records, file },
        truncated_tail: parsed.torn_tail,
    })
}

impl Store {
    pub fn append_block(&mut self, block: &Block) -> Result<(), NodeError> {
        Ok(self.log.append(block)?)
    }

    /// Written to a temporary file and renamed into place.
    pub fn save_durable(&self, d: &DurableConsensus) -> Result<(), NodeError> {
        let tmp = self.dir.join(format!("{DURABLE_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        f.write_all(&d.to_canonical_bytes())?;
        f.sync_data()?;
        fs::rename(&tmp, self.dir.join(DURABLE_FILE))?;
        Ok(())
    }

    pub fn log_path(&self) -> &Path {
        self.log.path()
    }
}

impl AuditTrail {
    pub fn append(&mut self, rec: AuditRecord) -> Result<(), NodeError> {
        let mut line = serde_json::to_string(&rec).expect("audit record serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pams_core::blocklog::encode_log;
    use pams_core::testkit::ChainBuilder;

    fn chain(n: u64) -> ChainBuilder {
        let mut b = ChainBuilder::new(3);
        for i in 0..n {
            let tx = b.pr_tx(i);
            b.push(vec![tx]);
        }
        b
    }

    #[test]
    fn fresh_directory_needs_genesis() {
        let dir = tempfile::tempdir().unwrap();
        let b = chain(0);
        let err = recover(dir.path(), None, Rules::default(), &b.keyring).err().unwrap();
        assert!(matches!(err, NodeError::Genesis(_)));
        let r = recover(dir.path(), Some(b.ledger.genesis().clone()), Rules::default(), &b.keyring).unwrap();
        assert_eq!(r.ledger.height(), 0);
        assert!(r.durable.is_none());
    }

    #[test]
    fn restart_reproduces_tip_and_state() {
        let dir = tempfile::tempdir().unwrap();
        let b = chain(5);
        fs::write(dir.path().join(LOG_FILE), encode_log(b.ledger.blocks())).unwrap();
        let r = recover(dir.path(), None, Rules::default(), &b.keyring).unwrap();
        assert_eq!(r.ledger.height(), 5);
        assert_eq!(r.ledger.state().state_hash(), b.ledger.state().state_hash());
    }

    #[test]
    fn tampered_block_is_reported_at_its_height() {
        let dir = tempfile::tempdir().unwrap();
        let b = chain(6);
        let mut blocks: Vec<Block> = b.ledger.blocks().cloned().collect();
        blocks[4].header.timestamp += 1;
        fs::write(dir.path().join(LOG_FILE), encode_log(&blocks)).unwrap();
        match recover(dir.path(), None, Rules::default(), &b.keyring) {
            Err(NodeError::CorruptLog { height, .. }) => assert_eq!(height, 4),
            other => panic!("expected CorruptLog, got {:?}", other.err()),
        }
    }

    #[test]
    fn other_network_genesis_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let b = chain(1);
        fs::write(dir.path().join(LOG_FILE), encode_log(b.ledger.blocks())).unwrap();
        let other = ChainBuilder::new(4);
        let err = recover(dir.path(), Some(other.ledger.genesis().clone()), Rules::default(), &b.keyring);
        assert!(matches!(err, Err(NodeError::Config(_))));
    }

    #[test]
    fn durable_state_and_audit_survive() {
        let dir = tempfile::tempdir().unwrap();
        let b = chain(0);
        let mut r = recover(dir.path(), Some(b.ledger.genesis().clone()), Rules::default(), &b.keyring).unwrap();
        let d = DurableConsensus { height: 1, round: 2, lock: None, voted: None };
        r.store.save_durable(&d).unwrap();
        let rec = AuditRecord::new(5, pams_core::audit::AuditKind::AuthFailure, "bad token");
        r.audit.append(rec.clone()).unwrap();
        drop(r);
        let r = recover(dir.path(), None, Rules::default(), &b.keyring).unwrap();
        assert_eq!(r.durable, Some(d));
        assert_eq!(r.audit.records(), [rec]);
    }
}
