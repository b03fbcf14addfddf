use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Real;

/// Inverted-dropout mask: each entry is `0` with probability `rate`, else
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Real>(n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect()
}

/// Independent stream for `(seed, item)`, so batch items can be processed in
/// any order and still draw identical masks.
pub fn item_rng(seed: u64, item: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(item);
    r
}
