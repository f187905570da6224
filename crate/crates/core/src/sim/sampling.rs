//! Stochastic primitives: operation-duration noise and breakdown draws.

use crate::schedule::Tick;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Sample a realized operation duration: normal around `nominal` with
/// standard deviation `sigma_frac * nominal`, truncated to three sigma and
/// floored at one tick. `sigma_frac == 0` returns the nominal exactly.
pub fn sample_duration(nominal: Tick, sigma_frac: f64, rng: &mut impl Rng) -> Tick {
    if sigma_frac <= 0.0 || nominal == 0 {
        return nominal.max(1);
    }
    let mean = nominal as f64;
    let sigma = sigma_frac * mean;
    let lo = mean - 3.0 * sigma;
    let hi = mean + 3.0 * sigma;
    let dist = Normal::new(mean, sigma).expect("sigma must be finite and positive");
    // Rejection keeps the distribution an honest truncation; the acceptance
    // region is wide, so a handful of draws suffices.
    for _ in 0..64 {
        let v = dist.sample(rng);
        if v >= lo && v <= hi {
            return (v.round() as i64).max(1) as Tick;
        }
    }
    nominal.max(1)
}
