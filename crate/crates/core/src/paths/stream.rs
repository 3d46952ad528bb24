//! Counter-based per-path random streams.
//!
//! Every path draws from its own ChaCha8 keystream, keyed by the ensemble's
//! master seed and addressed by the path's stream index. A path's values are
//! therefore a pure function of `(master_seed, index)`, independent of how
//! many other paths are generated or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::grid::TimeGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub master_seed: u64,
    pub index: u64,
}

impl StreamId {
    pub fn new(master_seed: u64, index: u64) -> Self {
        StreamId { master_seed, index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.index);
        rng
    }

    /// An independent stream for a distinct component of the same path
    /// (e.g. the uniform draw or the post-glue Bessel piece).
    pub fn lane(&self, lane: u64) -> StreamId {
        StreamId {
            master_seed: splitmix64(self.master_seed ^ splitmix64(lane.wrapping_add(1))),
            index: self.index,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard-BM increments over each grid interval, `dims` coordinates per step
/// (step-major). All samplers draw their Brownian noise through this function,
/// so the same stream gives the same underlying motion across processes.
pub fn gaussian_increments(grid: &TimeGrid, stream: StreamId, dims: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    let steps = grid.len() - 1;
    let mut out = Vec::with_capacity(steps * dims);
    for i in 0..steps {
        let sd = grid.step(i).sqrt();
        for _ in 0..dims {
            let z: f64 = rng.sample(StandardNormal);
            out.push(sd * z);
        }
    }
    out
}
