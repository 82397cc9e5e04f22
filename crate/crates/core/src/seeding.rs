//! Independent random streams derived from one run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT_STREAM: u64 = 0;
pub const ACTION_STREAM: u64 = 1;
pub const MINIBATCH_STREAM: u64 = 2;
pub const EVAL_STREAM: u64 = 3;
/// Environment `n` uses stream `ENV_STREAM_BASE + n`.
pub const ENV_STREAM_BASE: u64 = 1 << 16;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
