//! Stable content digests and seed derivation.
//!
//! Everything that must be reproducible across runs and platforms funnels
//! through these helpers: cache keys, transcript chaining, and per-call RNG
//! seeds.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Digest a sequence of fields with unambiguous length framing.
///
/// Each field is prefixed by its byte length so that `["ab", "c"]` and
/// `["a", "bc"]` hash differently.
pub fn sha256_fields(fields: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for f in fields {
        hasher.update((f.len() as u64).to_le_bytes());
        hasher.update(f);
    }
    hex::encode(hasher.finalize())
}

/// Derive a 64-bit seed from a base seed and a list of context labels.
///
/// Used to make every completion's randomness a pure function of
/// (run seed, task, stage, perspective, sample index) so that results do not
/// depend on execution order.
pub fn derive_seed(base: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p.as_bytes());
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields at least 8 bytes"))
}

/// FNV-1a 64-bit hash. Stable and fast; used where a full SHA-256 would be
/// overkill (trigram bucketing, template variety picks).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}
