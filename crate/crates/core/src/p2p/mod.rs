//! Node-to-node messages and the transport contract.

pub mod sim;

use std::fmt;

use thiserror::Error;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::consensus::Lock;
use crate::crypto::Digest;
use crate::ledger::{Block, Transaction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MessageKind {
    SubmitTx,
    Propose,
    Approve,
    Commit,
    SyncRequest,
    SyncResponse,
    RoundChange,
}

impl MessageKind {
    pub const ALL: [MessageKind; 7] = [
        MessageKind::SubmitTx,
        MessageKind::Propose,
        MessageKind::Approve,
        MessageKind::Commit,
        MessageKind::SyncRequest,
        MessageKind::SyncResponse,
        MessageKind::RoundChange,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::SubmitTx => "SubmitTx",
            MessageKind::Propose => "Propose",
            MessageKind::Approve => "Approve",
            MessageKind::Commit => "Commit",
            MessageKind::SyncRequest => "SyncRequest",
            MessageKind::SyncResponse => "SyncResponse",
            MessageKind::RoundChange => "RoundChange",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Body {
    SubmitTx(Transaction),
    /// `origin_round` is the round whose primary assembled `block`; it is
    /// below `round` when a locked block is carried forward.
    Propose { height: u64, round: u64, origin_round: u64, block: Block },
    Approve { height: u64, round: u64, validator_id: String, block_hash: Digest, tag: Digest },
    Commit(Block),
    SyncRequest { from_height: u64 },
    SyncResponse(Vec<Block>),
    /// Sent on entering `round`; carries the sender's lock, if any.
    RoundChange { height: u64, round: u64, lock: Option<Lock> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub sender_id: String,
    pub body: Body,
}

impl Message {
    pub fn new(sender_id: impl Into<String>, body: Body) -> Self {
        Message { sender_id: sender_id.into(), body }
    }

    pub fn kind(&self) -> MessageKind {
        match self.body {
            Body::SubmitTx(_) => MessageKind::SubmitTx,
            Body::Propose { .. } => MessageKind::Propose,
            Body::Approve { .. } => MessageKind::Approve,
            Body::Commit(_) => MessageKind::Commit,
            Body::SyncRequest { .. } => MessageKind::SyncRequest,
            Body::SyncResponse(_) => MessageKind::SyncResponse,
            Body::RoundChange { .. } => MessageKind::RoundChange,
        }
    }
}

impl Canonical for Message {
    fn encode(&self, enc: &mut Encoder) {
        enc.text(self.kind().name()).text(&self.sender_id);
        match &self.body {
            Body::SubmitTx(tx) => {
                enc.put(tx);
            }
            Body::Propose { height, round, origin_round, block } => {
                enc.u64(*height).u64(*round).u64(*origin_round).put(block);
            }
            Body::Approve { height, round, validator_id, block_hash, tag } => {
                enc.u64(*height).u64(*round).text(validator_id).put(block_hash).put(tag);
            }
            Body::Commit(block) => {
                enc.put(block);
            }
            Body::SyncRequest { from_height } => {
                enc.u64(*from_height);
            }
            Body::SyncResponse(blocks) => {
                enc.list(blocks);
            }
            Body::RoundChange { height, round, lock } => {
                enc.u64(*height).u64(*round).option(lock.as_ref());
            }
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let kind_name = dec.text()?;
        let kind = MessageKind::from_name(&kind_name)
            .ok_or_else(|| CodecError::Invalid(format!("message kind {kind_name:?}")))?;
        let sender_id = dec.text()?;
        let body = match kind {
            MessageKind::SubmitTx => Body::SubmitTx(dec.get()?),
            MessageKind::Propose => Body::Propose {
                height: dec.u64()?,
                round: dec.u64()?,
                origin_round: dec.u64()?,
                block: dec.get()?,
            },
            MessageKind::Approve => Body::Approve {
                height: dec.u64()?,
                round: dec.u64()?,
                validator_id: dec.text()?,
                block_hash: dec.get()?,
                tag: dec.get()?,
            },
            MessageKind::Commit => Body::Commit(dec.get()?),
            MessageKind::SyncRequest => Body::SyncRequest { from_height: dec.u64()? },
            MessageKind::SyncResponse => Body::SyncResponse(dec.list()?),
            MessageKind::RoundChange => Body::RoundChange {
                height: dec.u64()?,
                round: dec.u64()?,
                lock: dec.option()?,
            },
        };
        Ok(Message { sender_id, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("unknown peer {0:?}")]
    UnknownPeer(String),
    #[error("peer {0:?} unreachable")]
    PeerUnreachable(String),
}

/// Fire-and-forget delivery. Messages to a live, connected peer arrive once
/// and in per-sender order; messages across a partition are dropped
/// without an error.
pub trait Transport {
    fn send(&self, to: &str, msg: Message) -> Result<(), TransportError>;

    fn broadcast(&self, peers: &[String], msg: Message) -> Result<(), TransportError> {
        for p in peers {
            self.send(p, msg.clone())?;
        }
        Ok(())
    }
}
