//! Deterministic parallel Monte Carlo over walk indices.
//!
//! Every walk draws from its own ChaCha8 stream keyed by (seed, walk index),
//! walks are grouped in fixed-size blocks, and block results are combined in
//! index order. The result therefore does not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Walks per block; part of the reproducibility contract.
pub const BLOCK: u64 = 4096;

/// Counter-based stream for walk `index` under `seed`.
pub fn walk_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 step, used to derive independent per-point seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counts reported to a progress hook after each block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub completed: u64,
    pub discarded: u64,
    pub total: u64,
}

pub type ProgressHook = Arc<dyn Fn(Progress) + Send + Sync>;

/// Outcome of one sample: a value and its step count, or a discard.
#[derive(Clone, Copy, Debug)]
pub enum Sample {
    Value { value: f64, steps: u64 },
    Discarded,
}

/// Order-independent accumulation of samples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub n: u64,
    pub discarded: u64,
    /// Number of samples with value exactly 1 (for indicator targets).
    pub hits: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub steps: u64,
}

impl Tally {
    pub fn push(&mut self, s: Sample) {
        match s {
            Sample::Value { value, steps } => {
                self.n += 1;
                if value == 1.0 {
                    self.hits += 1;
                }
                self.sum += value;
                self.sum_sq += value * value;
                self.steps += steps;
            }
            Sample::Discarded => self.discarded += 1,
        }
    }

    pub fn merge(&mut self, o: &Tally) {
        self.n += o.n;
        self.discarded += o.discarded;
        self.hits += o.hits;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.steps += o.steps;
    }
}

/// Runs `sample(index, rng)` for indices 0..n in parallel blocks.
pub fn run_blocks<F>(n: u64, seed: u64, sample: F, progress: Option<&ProgressHook>) -> Tally
where
    F: Fn(u64, &mut ChaCha8Rng) -> Sample + Sync,
{
    run_blocks_with(
        n,
        seed,
        Tally::default,
        |i, rng, t: &mut Tally| t.push(sample(i, rng)),
        |a, b| a.merge(b),
        |t| (t.n, t.discarded),
        progress,
    )
}

/// General form of [`run_blocks`]: each block folds its samples into a fresh
/// accumulator and the block accumulators are merged in index order.
pub fn run_blocks_with<A, N, F, M, C>(
    n: u64,
    seed: u64,
    new: N,
    sample: F,
    merge: M,
    counts: C,
    progress: Option<&ProgressHook>,
) -> A
where
    A: Send,
    N: Fn() -> A + Sync,
    F: Fn(u64, &mut ChaCha8Rng, &mut A) + Sync,
    M: Fn(&mut A, &A),
    C: Fn(&A) -> (u64, u64) + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let done = AtomicU64::new(0);
    let dropped = AtomicU64::new(0);
    let per_block: Vec<A> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = new();
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n);
            for i in lo..hi {
                let mut rng = walk_rng(seed, i);
                sample(i, &mut rng, &mut acc);
            }
            if let Some(hook) = progress {
                let (c, d) = counts(&acc);
                let c = done.fetch_add(c, Ordering::Relaxed) + c;
                let d = dropped.fetch_add(d, Ordering::Relaxed) + d;
                hook(Progress {
                    completed: c,
                    discarded: d,
                    total: n,
                });
            }
            acc
        })
        .collect();
    let mut total = new();
    for a in &per_block {
        merge(&mut total, a);
    }
    total
}
