//! Intrusion detection on UNSW-NB15 flow records: chi-square feature
//! selection feeding a lightweight CNN-BiLSTM, with classical baselines and
//! evaluation reports.

pub mod autonet;
pub mod data;
pub mod chisel;
pub mod metrics;
pub mod idsmodel;
pub mod baselines;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator number `stream` derived from one run seed. Every
/// random draw in the crate goes through this, so a single seed fixes a run.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
