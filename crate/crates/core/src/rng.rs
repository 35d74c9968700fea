use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every stochastic component. ChaCha8 is counter based, so
/// independent substreams can be derived from `(seed, index)` without any
/// shared state between trials.
pub type SimRng = ChaCha8Rng;

/// RNG for substream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform draw in `(0, 1]`, never zero, so `ln` is always finite.
pub fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}
