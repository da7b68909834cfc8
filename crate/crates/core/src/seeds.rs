//! Deterministic seed derivation.
//!
//! All randomness in a run flows from one root seed. Stages and parallel
//! tasks derive their own independent streams with [`derive`], so results do
//! not depend on scheduling or on how work is batched.

/// SplitMix64 finalizer; good avalanche, cheap, stable across platforms.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `root` for the stream tagged `(tag, index)`.
///
/// `tag` names the consumer (stage or purpose), `index` distinguishes
/// parallel tasks within it.
pub fn derive(root: u64, tag: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325; // FNV-1a over the tag bytes
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    splitmix64(root ^ splitmix64(h ^ index.wrapping_mul(0x9e3779b97f4a7c15)))
}
