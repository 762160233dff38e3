//! Replication-parallel execution with schedule-independent results.
//!
//! Replications are split into at most [`MAX_BLOCKS`] contiguous blocks whose
//! boundaries depend only on `R`. Each replication draws from its own ChaCha
//! stream, each block accumulates sequentially, and blocks are merged in
//! block order, so the worker count never changes a result bit.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;

pub const MAX_BLOCKS: usize = 64;

/// Independent sample families drawn from one model seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Moments = 1,
    Sums = 2,
    SmallN = 3,
    LargeN = 4,
    Tails = 5,
    Weights = 6,
    Diagnostics = 7,
}

/// RNG for replication `rep` of the sample family `stream`.
pub fn replication_rng(seed: u64, stream: Stream, rep: u64) -> ChaCha8Rng {
    let key = seed ^ (stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(rep);
    rng
}

/// Contiguous replication ranges covering `0..r`.
pub fn block_ranges(r: u64) -> Vec<Range<u64>> {
    let b = (MAX_BLOCKS as u64).min(r).max(1);
    (0..b).map(|k| (k * r / b)..((k + 1) * r / b)).collect()
}

/// Runs `f` on every block, in a pool of `threads` workers (`0` = rayon's
/// default), and returns the block results in block order.
pub fn run_blocks<T, F>(r: u64, threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(Range<u64>) -> Result<T> + Sync + Send,
{
    if r == 0 {
        return Err(Error::InvalidArgument("replications must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| block_ranges(r).into_par_iter().map(&f).collect())
}

/// Running sums for one block of replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SumBlock {
    pub count: u64,
    pub sums: Vec<f64>,
}

impl SumBlock {
    pub fn new(width: usize) -> Self {
        Self {
            count: 0,
            sums: vec![0.0; width],
        }
    }
}

/// Estimate with a jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Estimate {
    /// Bias-corrected value.
    pub value: f64,
    /// Plug-in value on all replications.
    pub plug_in: f64,
    pub std_error: f64,
}

/// Pooled means over all blocks, merged in block order.
pub fn pooled_means(blocks: &[SumBlock]) -> Vec<f64> {
    let n: u64 = blocks.iter().map(|b| b.count).sum();
    let width = blocks.first().map_or(0, |b| b.sums.len());
    (0..width)
        .map(|j| pairwise_sum(&blocks.iter().map(|b| b.sums[j]).collect::<Vec<_>>()) / n as f64)
        .collect()
}

/// Delete-a-group jackknife of `stat` over the blocks; `stat` receives the
/// means of the columns `cols`, in that order.
pub fn jackknife(blocks: &[SumBlock], cols: &[usize], stat: impl Fn(&[f64]) -> f64) -> Estimate {
    let n: u64 = blocks.iter().map(|b| b.count).sum();
    let totals: Vec<f64> = cols
        .iter()
        .map(|&j| pairwise_sum(&blocks.iter().map(|b| b.sums[j]).collect::<Vec<_>>()))
        .collect();
    let full: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    let plug_in = stat(&full);
    let g = blocks.len();
    if g < 2 {
        return Estimate {
            value: plug_in,
            plug_in,
            std_error: f64::NAN,
        };
    }
    let mut buf = vec![0.0; cols.len()];
    let leave_out: Vec<f64> = blocks
        .iter()
        .map(|b| {
            let rest = (n - b.count) as f64;
            for (slot, (&j, t)) in buf.iter_mut().zip(cols.iter().zip(&totals)) {
                *slot = (t - b.sums[j]) / rest;
            }
            stat(&buf)
        })
        .collect();
    let mean = pairwise_sum(&leave_out) / g as f64;
    let ss = pairwise_sum(&leave_out.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>());
    let gf = g as f64;
    Estimate {
        value: gf * plug_in - (gf - 1.0) * mean,
        plug_in,
        std_error: ((gf - 1.0) / gf * ss).sqrt(),
    }
}

/// `|v|^p`, with integer `p` evaluated by repeated multiplication.
#[inline]
pub fn abs_pow(v: f64, p: f64) -> f64 {
    let a = v.abs();
    if p.fract() == 0.0 && (1.0..=64.0).contains(&p) {
        a.powi(p as i32)
    } else {
        a.powf(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn blocks_cover_replications() {
        for r in [1u64, 5, 64, 65, 1000, 100_003] {
            let b = block_ranges(r);
            assert!(b.len() <= MAX_BLOCKS);
            assert_eq!(b[0].start, 0);
            assert_eq!(b.last().unwrap().end, r);
            assert!(b.windows(2).all(|w| w[0].end == w[1].start && w[0].start < w[0].end));
        }
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = replication_rng(1, Stream::Sums, 0).random();
        let b: u64 = replication_rng(1, Stream::Sums, 1).random();
        let c: u64 = replication_rng(1, Stream::Tails, 0).random();
        assert!(a != b && a != c);
        assert_eq!(a, replication_rng(1, Stream::Sums, 0).random::<u64>());
    }

    #[test]
    fn results_do_not_depend_on_threads() {
        let run = |t| {
            run_blocks(10_000, t, |range| {
                let mut blk = SumBlock::new(1);
                for rep in range {
                    blk.sums[0] += replication_rng(9, Stream::Sums, rep).random::<f64>();
                    blk.count += 1;
                }
                Ok(blk)
            })
            .unwrap()
        };
        let one = jackknife(&run(1), &[0], |m| m[0]);
        for t in [2, 4, 8] {
            assert_eq!(jackknife(&run(t), &[0], |m| m[0]), one);
        }
        assert!((one.value - 0.5).abs() < 4.0 * one.std_error);
    }

    #[test]
    fn jackknife_of_mean_matches_classical_error() {
        // group means of iid data: jackknife SE ~ sd / sqrt(N)
        let blocks: Vec<SumBlock> = (0..64)
            .map(|k| {
                let mut b = SumBlock::new(1);
                for rep in 0..100 {
                    let v: f64 = replication_rng(4, Stream::Sums, k * 100 + rep).random();
                    b.sums[0] += v;
                    b.count += 1;
                }
                b
            })
            .collect();
        let e = jackknife(&blocks, &[0], |m| m[0]);
        let classical = (1.0f64 / 12.0).sqrt() / (6400f64).sqrt();
        assert!((e.std_error / classical - 1.0).abs() < 0.3);
        assert!((e.value - e.plug_in).abs() < 1e-12);
    }

    #[test]
    fn integer_powers_agree() {
        for p in [2.0, 3.0, 8.0] {
            assert!((abs_pow(-1.3, p) - 1.3f64.powf(p)).abs() < 1e-12);
        }
        assert_eq!(abs_pow(-2.0, 2.5), 2f64.powf(2.5));
    }
}
