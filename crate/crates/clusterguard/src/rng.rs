//! Deterministic stream splitting for parallel Monte Carlo.
//!
//! Every stochastic routine draws from a ChaCha8 stream keyed by
//! (seed, replication, cluster, role). Streams are independent by key, so
//! replications and clusters can be generated in any order, on any number
//! of threads, with bit-identical results.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream roles; distinct roles give independent streams for the same
/// (seed, rep, cluster) so that, e.g., changing how X is consumed never
/// perturbs U.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Sizes = 1,
    RegressorX = 2,
    ErrorU = 3,
    TailMagnitudes = 4,
    Calibration = 5,
}

/// ChaCha8 stream for the given key, seeded by the four words laid out
/// little-endian in the 32-byte seed.
pub fn substream(seed: u64, rep: u64, cluster: u64, role: Role) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep.to_le_bytes());
    key[16..24].copy_from_slice(&cluster.to_le_bytes());
    key[24..32].copy_from_slice(&(role as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Pareto(1, shape) draw by inverse CDF: (1-U)^(-1/shape) with U in [0,1).
/// 1-U is in (0, 1], so the result is finite and >= 1.
pub fn pareto(rng: &mut impl Rng, shape: f64) -> f64 {
    let u: f64 = rng.random();
    (1.0 - u).powf(-1.0 / shape)
}

/// Standard normal draw.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}
