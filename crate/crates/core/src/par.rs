//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over the rayon pool;
//! without it everything runs on the calling thread. Reductions always add
//! fixed-size chunks in index order, so results are bit-identical across
//! thread counts and across both builds.

/// Chunk length used by [`sum_by`]. Part of the reproducibility contract:
/// changing it changes the rounding of every empirical mean.
pub const SUM_CHUNK: usize = 1024;

pub fn num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn chunk_sum<T, F: Fn(usize, &T) -> f64>(offset: usize, chunk: &[T], f: &F) -> f64 {
    chunk
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, item)| acc + f(offset + i, item))
}

/// Deterministic sum of `f(index, item)`.
pub fn sum_by<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(usize, &T) -> f64 + Sync + Send,
{
    if items.len() <= SUM_CHUNK {
        return chunk_sum(0, items, &f);
    }
    #[cfg(feature = "parallel")]
    let partial: Vec<f64> = {
        use rayon::prelude::*;
        items
            .par_chunks(SUM_CHUNK)
            .enumerate()
            .map(|(c, chunk)| chunk_sum(c * SUM_CHUNK, chunk, &f))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<f64> = items
        .chunks(SUM_CHUNK)
        .enumerate()
        .map(|(c, chunk)| chunk_sum(c * SUM_CHUNK, chunk, &f))
        .collect();
    partial.iter().sum()
}

/// Deterministic mean of `f(index, item)`; zero for an empty slice.
pub fn mean_by<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(usize, &T) -> f64 + Sync + Send,
{
    if items.is_empty() {
        return 0.0;
    }
    sum_by(items, f) / items.len() as f64
}

/// Runs `op` inside a dedicated pool of `threads` workers. Without the
/// `parallel` feature this just calls `op`.
pub fn with_threads<R: Send>(threads: usize, op: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
        {
            Ok(pool) => pool.install(op),
            Err(_) => op(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        op()
    }
}
