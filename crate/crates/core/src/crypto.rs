//! SHA3-512 digests and the keyed approval tags validators exchange.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest as _, Sha3_512};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};

pub const DIGEST_LEN: usize = 64;
pub const SECRET_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HexError {
    #[error("expected {expected} hex characters, found {found}")]
    Length { expected: usize, found: usize },
    #[error("invalid hex: {0}")]
    Invalid(String),
}

/// A 512-bit SHA3 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);

    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Digest(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    /// Lowercase, 128 characters, no separators.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        if s.len() != DIGEST_LEN * 2 {
            return Err(HexError::Length { expected: DIGEST_LEN * 2, found: s.len() });
        }
        let mut out = [0u8; DIGEST_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|e| HexError::Invalid(e.to_string()))?;
        Ok(Digest(out))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0u8; DIGEST_LEN]
    }

    /// First 12 hex characters, for traces.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}…)", &self.to_hex()[..16])
    }
}

impl FromStr for Digest {
    type Err = HexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Digest::from_hex(s)
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

impl Canonical for Digest {
    fn encode(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }
    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.fixed::<DIGEST_LEN>().map(Digest)
    }
}

/// FIPS-202 SHA3-512.
pub fn sha3_512(data: &[u8]) -> Digest {
    let out = Sha3_512::digest(data);
    let mut bytes = [0u8; DIGEST_LEN];
    bytes.copy_from_slice(&out);
    Digest(bytes)
}

/// Hash of the canonical encoding of `value`.
pub fn hash_canonical<T: Canonical>(value: &T) -> Digest {
    sha3_512(&value.to_canonical_bytes())
}

/// Shared secret a validator uses to tag its approvals.
#[derive(Clone, PartialEq, Eq)]
pub struct MacSecret([u8; SECRET_LEN]);

impl MacSecret {
    pub fn from_bytes(bytes: [u8; SECRET_LEN]) -> Self {
        MacSecret(bytes)
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; SECRET_LEN];
        rng.fill_bytes(&mut bytes);
        MacSecret(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; SECRET_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, HexError> {
        let s = s.trim();
        if s.len() != SECRET_LEN * 2 {
            return Err(HexError::Length { expected: SECRET_LEN * 2, found: s.len() });
        }
        let mut out = [0u8; SECRET_LEN];
        hex::decode_to_slice(s, &mut out).map_err(|e| HexError::Invalid(e.to_string()))?;
        Ok(MacSecret(out))
    }
}

// Secrets never reach logs.
impl fmt::Debug for MacSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("MacSecret(<redacted>)")
    }
}

/// `sha3_512(secret ‖ message)`. SHA3 is not subject to length extension, so the
/// plain prefix construction is a sound MAC.
pub fn mac_tag(secret: &MacSecret, message: &[u8]) -> Digest {
    let mut hasher = Sha3_512::new();
    hasher.update(secret.0);
    hasher.update(message);
    let mut bytes = [0u8; DIGEST_LEN];
    bytes.copy_from_slice(&hasher.finalize());
    Digest(bytes)
}

pub fn verify_tag(secret: &MacSecret, message: &[u8], tag: &Digest) -> bool {
    let expected = mac_tag(secret, message);
    // no early exit on the first differing byte
    expected
        .0
        .iter()
        .zip(tag.0.iter())
        .fold(0u8, |acc, (a, b)| acc | (a ^ b))
        == 0
}
