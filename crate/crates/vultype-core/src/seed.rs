//! Deterministic sub-seed derivation.
//!
//! Every randomized stage (splitting, init of each tensor, epoch
//! shuffles, negative sampling) draws from its own RNG seeded by
//! `derive(base, tag)`, so stages stay independent: inserting a draw
//! in one stage never perturbs another.

/// Fold a base seed and a stage tag into a new seed (FNV-1a over the
/// seed bytes followed by the tag bytes).
pub fn derive(base: u64, tag: &str) -> u64 {
    const OFFSET: u64 = 0xcbf29ce484222325;
    const PRIME: u64 = 0x100000001b3;
    let mut h = OFFSET;
    for b in base.to_le_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(PRIME);
    }
    for &b in tag.as_bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(PRIME);
    }
    h
}
