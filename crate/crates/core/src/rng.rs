use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// RNG for a top-level seed. All randomized entry points take a caller-owned
/// RNG; this is the canonical way to make one from a CLI seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream derived from (seed, stream). Draw i of a batch uses
/// stream i, so results are identical no matter how draws are scheduled
/// across workers.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
