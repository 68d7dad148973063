//! Counter-based random streams.
//!
//! Every Monte Carlo loop in the crate draws from a [`RngStream`], a pair
//! `(root_seed, stream_id)` mapped onto a ChaCha8 key and stream number.
//! Work is split into fixed-size chunks, each with its own derived stream,
//! and chunk results are merged in chunk order. The worker count never
//! influences which numbers a chunk sees, so results are bitwise identical
//! for any thread pool width.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of samples handled by one derived stream in [`par_chunks`].
pub const CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub root_seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(root_seed: u64, stream_id: u64) -> Self {
        Self { root_seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A child stream; distinct `index` values give distinct, reproducible streams.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream {
            root_seed: self.root_seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(1))),
        }
    }
}

/// Runs `work(rng, chunk_len)` over `ceil(samples / CHUNK)` chunks in
/// parallel and returns the per-chunk results in chunk order.
pub fn par_chunks<T, F>(stream: RngStream, samples: usize, work: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(samples - c * CHUNK);
            let mut rng = stream.substream(c as u64).rng();
            work(&mut rng, len)
        })
        .collect()
}
