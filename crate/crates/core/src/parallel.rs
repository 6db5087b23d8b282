//! Order-preserving fan-out over a bounded thread pool.

use rayon::prelude::*;

/// Map `f` over `items` on up to `jobs` threads, returning results in input order.
///
/// `jobs <= 1` runs inline on the calling thread.
pub fn map_ordered<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running inline");
            items.iter().map(f).collect()
        }
    }
}
