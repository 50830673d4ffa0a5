#![allow(dead_code)]

use ia_kit::{NetworkConfig, PairConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounds for random stream-admissible configurations.
#[derive(Clone, Copy)]
pub struct Bounds {
    pub k: (usize, usize),
    pub antennas: usize,
    pub d: usize,
}

pub const SMALL: Bounds = Bounds {
    k: (2, 4),
    antennas: 6,
    d: 2,
};

pub fn random_config(rng: &mut impl Rng, b: Bounds) -> NetworkConfig {
    let k = rng.random_range(b.k.0..=b.k.1);
    let pairs = (0..k)
        .map(|_| {
            let d = rng.random_range(1..=b.d.min(b.antennas));
            let m = rng.random_range(d..=b.antennas);
            let n = rng.random_range(d..=b.antennas);
            PairConfig::new(m, n, d)
        })
        .collect();
    NetworkConfig::new(pairs).unwrap()
}

/// `count` configurations from a fixed seed; the list is frozen across runs.
pub fn corpus(seed: u64, count: usize, b: Bounds) -> Vec<NetworkConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_config(&mut rng, b)).collect()
}

/// Uniform d with d dividing every N_k.
pub fn divisible_corpus(seed: u64, count: usize) -> Vec<NetworkConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = rng.random_range(1..=3);
            let k = rng.random_range(2..=4);
            let pairs = (0..k)
                .map(|_| {
                    let n = d * rng.random_range(1..=9 / d);
                    let m = rng.random_range(d..=9);
                    PairConfig::new(m, n, d)
                })
                .collect();
            NetworkConfig::new(pairs).unwrap()
        })
        .collect()
}
