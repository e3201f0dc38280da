//! Counter-based Gaussian shock streams.
//!
//! Every stream index (a path, a bar, a replication) owns an independent
//! ChaCha8 stream keyed by `(seed, index)`, so the numbers a consumer sees do
//! not depend on how many other streams were drawn or in which order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShockStream {
    seed: u64,
}

impl ShockStream {
    pub fn new(seed: u64) -> Self {
        ShockStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for stream `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    /// Fills `out` with standard normals from stream `index`.
    pub fn fill_normals(&self, index: u64, out: &mut [f64]) {
        let mut rng = self.rng(index);
        for x in out.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
    }

    /// Replayable block of `n_draws × m_substeps × channels` normals.
    pub fn block(&self, index: u64, n_draws: usize, m_substeps: usize, channels: usize) -> ShockBlock {
        let mut data = vec![0.0; n_draws * m_substeps * channels];
        self.fill_normals(index, &mut data);
        ShockBlock {
            n_draws,
            m_substeps,
            channels,
            data,
        }
    }

    /// Derives the `k`-th child seed; used to split one master seed into
    /// per-replication seeds.
    pub fn child_seed(&self, k: u64) -> u64 {
        self.rng(k).next_u64()
    }
}

/// Fixed block of shocks laid out as `[draw][substep][channel]`.
///
/// For three channels the order within a substep is `(W_p, W_v, W_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockBlock {
    pub n_draws: usize,
    pub m_substeps: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl ShockBlock {
    pub fn zeros(n_draws: usize, m_substeps: usize, channels: usize) -> Self {
        ShockBlock {
            n_draws,
            m_substeps,
            channels,
            data: vec![0.0; n_draws * m_substeps * channels],
        }
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let w = self.m_substeps * self.channels;
        &self.data[i * w..(i + 1) * w]
    }
}
