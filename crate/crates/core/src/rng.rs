//! Random stream derivation.
//!
//! All randomness comes from ChaCha8, which has 2^64 independent streams per
//! key. A run seed `s` is expanded into a 256-bit key; the stream for work
//! item `(cell, replication, chain)` is
//!
//! ```text
//! stream = (cell << 48) | (replication << 16) | chain
//! ```
//!
//! with `cell < 2^16`, `replication < 2^32` and `chain < 2^16`. Distinct
//! purposes inside one work item (data simulation, posterior sampling, LOO
//! folds) use distinct `chain` slots, see [`Purpose`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Slot offsets within the 16-bit `chain` field.
#[derive(Debug, Clone, Copy)]
pub enum Purpose {
    /// Simulating observed data.
    Data,
    /// Out-of-sample draws for the true-discrepancy oracle.
    Oracle,
    /// Optimizer restarts.
    Restart,
    /// Posterior chain `c` of the full-data fit.
    Chain(u16),
    /// Posterior chain `c` of leave-one-out fold `i` (`fold < 1020`, `chain < 64`).
    Fold { fold: u16, chain: u16 },
}

impl Purpose {
    fn slot(self) -> u64 {
        match self {
            Purpose::Data => 0,
            Purpose::Oracle => 1,
            Purpose::Restart => 2,
            Purpose::Chain(c) => 16 + u64::from(c),
            Purpose::Fold { fold, chain } => 256 + u64::from(fold) * 64 + u64::from(chain),
        }
    }
}

/// Identifies one independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamId {
    pub cell: u64,
    pub replication: u64,
}

impl StreamId {
    pub fn new(cell: u64, replication: u64) -> Self {
        debug_assert!(cell < 1 << 16 && replication < 1 << 32);
        Self { cell, replication }
    }

    pub fn rng(self, seed: u64, purpose: Purpose) -> ChaCha8Rng {
        stream_rng(seed, (self.cell << 48) | (self.replication << 16) | purpose.slot())
    }
}

/// Generator for raw stream `stream` under run seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
