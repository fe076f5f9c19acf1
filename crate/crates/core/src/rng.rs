//! Seeded random streams.
//!
//! Every stochastic element of an environment draws from its own ChaCha
//! stream keyed by `(seed, stream id)`, so adding a new element never shifts
//! the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};

pub use rand::Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream identifiers. Values are part of the reproducibility contract.
pub mod stream {
    pub const DEMAND: u64 = 1;
    pub const COMPETITOR: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const OVERRIDE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SAMPLING: u64 = 6;
    pub const SHUFFLE: u64 = 7;
}

pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser, used to derive child seeds (episode seeds, worker seeds).
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    let dist = Poisson::new(rate).expect("finite positive rate");
    let draw: f64 = dist.sample(rng);
    draw as u64
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, p: f64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if trials == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return trials;
    }
    Binomial::new(trials, p).expect("valid binomial").sample(rng)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std <= 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("valid normal").sample(rng)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    normal(rng, 0.0, 1.0)
}

/// Uniform integer in `lo..=hi`.
pub fn uniform_int<R: Rng + ?Sized>(rng: &mut R, lo: u64, hi: u64) -> u64 {
    if hi <= lo {
        return lo;
    }
    rng.random_range(lo..=hi)
}

pub fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    lo + (hi - lo) * rng.random::<f64>()
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, trials: u64, probs: &[f64]) -> alloc::vec::Vec<u64> {
    let mut out = alloc::vec![0u64; probs.len()];
    let mut remaining = trials;
    let mut mass = 1.0f64;
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probs.len() {
            out[i] = remaining;
            break;
        }
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let k = binomial(rng, remaining, cond);
        out[i] = k;
        remaining -= k;
        mass -= p;
    }
    out
}
