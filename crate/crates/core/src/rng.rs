//! The pinned generator behind every seeded source.
//!
//! Record `i` of a run with seed `s` draws from ChaCha8 keyed by
//! `ChaCha8Rng::seed_from_u64(s)` on stream `i`. Records are independent of one
//! another, so a run can be resumed at any record index without replaying the
//! earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RecordRng = ChaCha8Rng;

pub fn record_rng(seed: u64, index: u64) -> RecordRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
