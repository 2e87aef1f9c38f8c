//! Bit flips over a serialized chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pams_core::blocklog::{encode_log, verify_log};
use pams_core::consensus::Keyring;
use pams_core::ledger::Block;
use pams_core::testkit::ChainBuilder;
use pams_core::Rules;

/// A certified chain of `blocks` blocks above genesis, each carrying one to
/// three purchase requests.
pub fn chain(blocks: usize) -> (Vec<Block>, Keyring) {
    let mut b = ChainBuilder::new(4);
    let mut i = 0u64;
    for h in 0..blocks {
        let txs = (0..1 + h % 3)
            .map(|_| {
                i += 1;
                b.pr_tx(i)
            })
            .collect();
        b.push(txs);
    }
    (b.ledger.blocks().cloned().collect(), b.keyring)
}

#[derive(Debug, Default)]
pub struct TamperReport {
    pub baseline_valid: bool,
    pub flips: usize,
    /// Offsets whose flip still verified as valid.
    pub undetected: Vec<usize>,
}

pub fn flip_bits(blocks: &[Block], keyring: &Keyring, flips: usize, seed: u64) -> TamperReport {
    let bytes = encode_log(blocks);
    let mut report = TamperReport {
        baseline_valid: verify_log(&bytes, Rules::default(), keyring).is_valid(),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..flips {
        let offset = rng.gen_range(0..bytes.len());
        let bit = rng.gen_range(0..8);
        let mut copy = bytes.clone();
        copy[offset] ^= 1 << bit;
        report.flips += 1;
        if verify_log(&copy, Rules::default(), keyring).is_valid() {
            report.undetected.push(offset);
        }
    }
    report
}
