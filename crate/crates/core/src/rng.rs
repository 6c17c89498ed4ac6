//! Seeded, portable random streams. Every consumer derives its generator
//! from a 64-bit seed plus a stream number, so runs replay bit-for-bit
//! across platforms and independently of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
