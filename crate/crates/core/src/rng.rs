//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by the
//! user seed, with the 64-bit stream id selecting an independent sequence per
//! (unit of work, purpose) pair. Work units are trials in `mcsim` and fixed-size
//! sample chunks in `moments`, so results never depend on how many worker
//! threads ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag of a random stream. Different purposes of the same work unit
/// never share a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Parametric noise `Ā(ξ)` (and `B̃` when sampled).
    Parametric = 0,
    /// Additive process noise `w`.
    Additive = 1,
    /// Anything else (random test instances, simplex samples).
    Aux = 2,
}

const PURPOSES: u64 = 4;

/// Generator for work unit `unit` and the given purpose.
pub fn stream(seed: u64, unit: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}

/// Number of worker threads requested through `COVLMI_THREADS`, if set to a
/// positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("COVLMI_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` inside a rayon pool capped by `COVLMI_THREADS`, or on the global
/// pool when the variable is unset.
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match thread_cap().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
