//! Append-only block log: `PAMSBLK1`, then per block an 8-byte big-endian
//! length and the canonical block encoding.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::Canonical;
use crate::consensus::Keyring;
use crate::ledger::{verify_chain, Block, VerificationReport};
use crate::state::Rules;

pub const MAGIC: &[u8; 8] = b"PAMSBLK1";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("not a block log (bad magic)")]
    BadMagic,
    #[error("corrupt log record at height {height}: {reason}")]
    Corrupt { height: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Blocks recovered from a log image plus the length of its intact prefix.
#[derive(Debug)]
pub struct Parsed {
    pub blocks: Vec<Block>,
    pub valid_len: usize,
    /// True if a torn final record was found past `valid_len`.
    pub torn_tail: bool,
}

pub fn encode_record(block: &Block) -> Vec<u8> {
    let body = block.to_canonical_bytes();
    let mut out = Vec::with_capacity(8 + body.len());
    out.extend_from_slice(&(body.len() as u64).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

pub fn encode_log<'a>(blocks: impl IntoIterator<Item = &'a Block>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    for b in blocks {
        out.extend_from_slice(&encode_record(b));
    }
    out
}

/// A record whose length runs past the end is a torn tail. A complete
/// record that fails to decode is corruption.
pub fn parse_log(bytes: &[u8]) -> Result<Parsed, LogError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(LogError::BadMagic);
    }
    let mut pos = MAGIC.len();
    let mut blocks = Vec::new();
    loop {
        let rest = &bytes[pos..];
        if rest.is_empty() {
            return Ok(Parsed { blocks, valid_len: pos, torn_tail: false });
        }
        if rest.len() < 8 {
            return Ok(Parsed { blocks, valid_len: pos, torn_tail: true });
        }
        let len = u64::from_be_bytes(rest[..8].try_into().expect("8 bytes"));
        let Some(end) = usize::try_from(len).ok().and_then(|l| l.checked_add(8)).filter(|e| *e <= rest.len())
        else {
            return Ok(Parsed { blocks, valid_len: pos, torn_tail: true });
        };
        let height = blocks.len() as u64;
        let block = Block::from_canonical_bytes(&rest[8..end])
            .map_err(|e| LogError::Corrupt { height, reason: e.to_string() })?;
        blocks.push(block);
        pos += end;
    }
}

/// Offline check of a whole log image. Unlike recovery, a torn tail counts
/// as a failure here.
pub fn verify_log(bytes: &[u8], rules: Rules, keyring: &Keyring) -> VerificationReport {
    let invalid = |height: u64, check: &str, detail: String| VerificationReport::Invalid {
        height,
        check: check.to_owned(),
        detail,
    };
    match parse_log(bytes) {
        Err(LogError::BadMagic) => invalid(0, "BadMagic", "not a block log".into()),
        Err(LogError::Corrupt { height, reason }) => invalid(height, "Decode", reason),
        Err(LogError::Io(e)) => invalid(0, "Io", e.to_string()),
        Ok(p) if p.torn_tail => invalid(
            p.blocks.len() as u64,
            "TornRecord",
            format!("record at byte {} runs past the end of the log", p.valid_len),
        ),
        Ok(p) => verify_chain(&p.blocks, rules, keyring),
    }
}

/// Open handle for appending.
#[derive(Debug)]
pub struct BlockLog {
    file: File,
    path: PathBuf,
}

impl BlockLog {
    /// Opens or creates the log, truncating a torn tail.
    pub fn open(path: &Path) -> Result<(BlockLog, Parsed), LogError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        if bytes.is_empty() {
            file.write_all(MAGIC)?;
            file.sync_data()?;
            let parsed = Parsed { blocks: Vec::new(), valid_len: MAGIC.len(), torn_tail: false };
            return Ok((BlockLog { file, path: path.to_owned() }, parsed));
        }
        let parsed = parse_log(&bytes)?;
        if parsed.torn_tail {
            file.set_len(parsed.valid_len as u64)?;
            file.sync_data()?;
        }
        Ok((BlockLog { file, path: path.to_owned() }, parsed))
    }

    pub fn append(&mut self, block: &Block) -> Result<(), LogError> {
        self.file.write_all(&encode_record(block))?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
