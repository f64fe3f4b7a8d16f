//! Seed derivation for every random choice in the artifact.
//!
//! One scenario seed fans out into independent sub-streams, one per concern
//! (duty shuffling, aggregator selection, topology wiring, ...), so that
//! toggling a feature does not shift the draws of an unrelated one. All
//! streams are ChaCha8, which is stable across platforms and rust versions.

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Domain tags keeping the sub-streams disjoint. Values are arbitrary but
/// must never be reused for a different purpose once runs are archived.
pub mod domain {
    pub const DUTY_SHUFFLE: u64 = 0x01;
    pub const AGGREGATORS: u64 = 0x02;
    pub const STATIC_SUBNETS: u64 = 0x03;
    pub const MESH_ORDER: u64 = 0x04;
    pub const OBSERVER_PEERS: u64 = 0x05;
    pub const FANOUT: u64 = 0x06;
    pub const EDGE_DROP: u64 = 0x07;
    pub const ORIGIN_FIRST: u64 = 0x08;
    pub const OBSERVER_FANOUT: u64 = 0x09;
    pub const RELAY_JITTER: u64 = 0x0a;
    pub const DYNAMIC_ATTACH: u64 = 0x0b;
    pub const LABELS: u64 = 0x0c;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a scenario seed with a domain tag and per-use salts into one u64.
pub fn subseed(seed: u64, domain: u64, salts: &[u64]) -> u64 {
    let mut acc = splitmix(seed ^ splitmix(domain));
    for &s in salts {
        acc = splitmix(acc ^ splitmix(s));
    }
    acc
}

/// An RNG for one (domain, salts) slot of the given scenario seed.
pub fn derived_rng(seed: u64, domain: u64, salts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(subseed(seed, domain, salts))
}

/// Map a subseed to a uniform value in [0, 1). Cheap enough to call once per
/// simulated delivery, unlike constructing a full RNG.
pub fn unit_f64(z: u64) -> f64 {
    (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One Bernoulli draw keyed entirely by (seed, domain, salts).
pub fn coin(seed: u64, domain: u64, salts: &[u64], prob: f64) -> bool {
    unit_f64(subseed(seed, domain, salts)) < prob
}
