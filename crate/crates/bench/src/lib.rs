//! Shared fixtures for the benchmarks.

use qbat_core::datagen::ParamRanges;
use qbat_core::BatteryParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` reproducible draws from the default sampling ranges.
pub fn sample_params(n: usize, seed: u64) -> Vec<BatteryParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = ParamRanges::default();
    (0..n).map(|_| ranges.draw(&mut rng, 1.0, 1.0)).collect()
}
