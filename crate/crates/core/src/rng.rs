//! Seeded random streams.
//!
//! Every consumer derives its own ChaCha stream from the run seed and a fixed
//! label, so adding a consumer never shifts another one's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `label` under `seed`.
pub fn stream(seed: u64, label: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(fnv1a(label))))
}

/// Stream for the `index`-th item of `label`; used for per-query draws that
/// must not depend on evaluation order.
pub fn indexed_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(splitmix(
        seed ^ splitmix(fnv1a(label) ^ splitmix(index.wrapping_add(1))),
    ))
}
