//! Chunked, seed-stable execution of embarrassingly parallel work.
//!
//! Work is split into a fixed number of chunks derived from the sample
//! count, never from the thread count. Each chunk owns an independent
//! ChaCha substream keyed by (seed, chunk index), and chunk results are
//! reduced in chunk order. Estimates are therefore bitwise identical
//! whether they run on one thread, many threads, or with the `parallel`
//! feature disabled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Samples per chunk for Monte Carlo loops.
pub const CHUNK: u64 = 4096;

/// Execution strategy for data-parallel loops.
///
/// `Parallel` uses rayon when the `parallel` feature is enabled and
/// degrades to sequential execution otherwise, so callers can pass it
/// unconditionally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        default_mode()
    }
}

/// Mode picked by the crate when the caller does not specify one.
pub fn default_mode() -> ExecMode {
    #[cfg(feature = "parallel")]
    {
        ExecMode::Parallel
    }
    #[cfg(not(feature = "parallel"))]
    {
        ExecMode::Sequential
    }
}

/// Configure the global thread pool size. No-op without the `parallel`
/// feature or if a pool has already been installed.
pub fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

/// RNG substream for one chunk of work.
pub fn stream_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Map a chunk index range, parallel or not, collecting results in
/// chunk order.
pub fn map_chunks<T, F>(mode: ExecMode, n_chunks: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        match mode {
            ExecMode::Sequential => (0..n_chunks).map(f).collect(),
            ExecMode::Parallel => (0..n_chunks).into_par_iter().map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = mode;
        (0..n_chunks).map(f).collect()
    }
}

/// Running sums for a scalar Monte Carlo mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccum {
    pub sum: f64,
    pub sum_sq: f64,
    pub count: u64,
}

impl MeanAccum {
    pub fn push(&mut self, v: f64) {
        self.sum += v;
        self.sum_sq += v * v;
        self.count += 1;
    }

    pub fn merge(mut self, other: MeanAccum) -> MeanAccum {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.count += other.count;
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Sample standard deviation divided by sqrt(count).
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return f64::NAN;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Seeded Monte Carlo mean of `f` over `samples` draws, chunked and
/// reduced pairwise in chunk order.
pub fn mc_mean<F>(mode: ExecMode, samples: u64, seed: u64, f: F) -> MeanAccum
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync + Send,
{
    let n_chunks = samples.div_ceil(CHUNK);
    let partials = map_chunks(mode, n_chunks, |chunk| {
        let mut rng = stream_rng(seed, chunk);
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(samples);
        let mut acc = MeanAccum::default();
        for _ in lo..hi {
            acc.push(f(&mut rng));
        }
        acc
    });
    pairwise_merge(partials)
}

fn pairwise_merge(mut parts: Vec<MeanAccum>) -> MeanAccum {
    if parts.is_empty() {
        return MeanAccum::default();
    }
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let f = |rng: &mut ChaCha8Rng| rng.random::<f64>();
        let a = mc_mean(ExecMode::Sequential, 10_000, 7, f);
        let b = mc_mean(ExecMode::Parallel, 10_000, 7, f);
        assert_eq!(a.mean().to_bits(), b.mean().to_bits());
        assert_eq!(a.stderr().to_bits(), b.stderr().to_bits());
    }

    #[test]
    fn stderr_matches_direct_formula() {
        let mut acc = MeanAccum::default();
        for v in [1.0, 2.0, 3.0, 4.0] {
            acc.push(v);
        }
        assert!((acc.mean() - 2.5).abs() < 1e-15);
        let s2: f64 = [1.0f64, 2.0, 3.0, 4.0]
            .iter()
            .map(|v| (v - 2.5) * (v - 2.5))
            .sum::<f64>()
            / 3.0;
        assert!((acc.stderr() - (s2 / 4.0).sqrt()).abs() < 1e-15);
    }
}
