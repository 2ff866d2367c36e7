//! Seed derivation. A master seed fans out to one stream per ensemble member,
//! keyed by the member's label, and each stream to one seed per restart.
//! Adding, removing or reordering members leaves every other stream alone.

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Combines two words into one well-mixed word.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b)
}

/// Stream seed for the member labelled `label`.
pub fn stream_seed(master: u64, label: &str) -> u64 {
    mix(master, fnv1a(label.as_bytes()))
}

/// Training phases that draw their own restart seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Restarts on the training segment, scored on validation.
    Selection = 1,
    /// Final fit on training plus validation.
    Refit = 2,
}

/// Seed for restart `restart` of `phase` within a stream.
pub fn restart_seed(stream: u64, phase: Phase, restart: usize) -> u64 {
    mix(mix(stream, phase as u64), restart as u64)
}
