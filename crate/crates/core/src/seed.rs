//! Deterministic seed derivation and configuration hashing.
//!
//! Every stochastic job (a CV fold plan, a bootstrap replicate, a synthetic
//! team) derives its own seed from the user seed plus a label, so parallel
//! execution and job reordering cannot change results.

/// 64-bit FNV-1a. Used instead of `std`'s `DefaultHasher` because output
/// bytes must be stable across Rust releases (they end up in report files).
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from a base seed, a textual label, and an index.
pub fn derive(base: u64, label: &str, index: u64) -> u64 {
    let mut buf = Vec::with_capacity(label.len() + 16);
    buf.extend_from_slice(&base.to_le_bytes());
    buf.extend_from_slice(label.as_bytes());
    buf.extend_from_slice(&index.to_le_bytes());
    // splitmix64 finalizer to decorrelate nearby indices
    let mut z = fnv1a64(&buf);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hex digest of a serialized configuration, echoed into sidecar
/// files so outputs can be matched to the exact invocation that wrote them.
pub fn config_hash(serialized: &str) -> String {
    format!("{:016x}", fnv1a64(serialized.as_bytes()))
}
