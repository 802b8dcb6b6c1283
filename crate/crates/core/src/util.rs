//! Parallel map helper with thread-count-independent results.
//!
//! Output determinism is a contract of the CLI: identical configurations must
//! reproduce identical numbers for any `--threads` value. Pointwise work is
//! therefore parallelized as a pure map into preassigned slots (no reduction
//! order to vary); any floating-point folds over the results run sequentially
//! on the caller's side.

use rayon::prelude::*;

const CHUNK: usize = 4096;

/// Elementwise map into a fresh vector, parallel over chunks.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send + Default + Clone,
    F: Fn(usize) -> T + Sync,
{
    let mut out = vec![T::default(); n];
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let lo = c * CHUNK;
        for (k, slot) in chunk.iter_mut().enumerate() {
            *slot = f(lo + k);
        }
    });
    out
}
