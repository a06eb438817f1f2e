//! Data-parallel helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! ordinary sequential iterators. Output order is always index order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Evaluates `f(i)` for `i in 0..n`, collecting results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// Maps `f` over fixed-size chunks of `items` and folds the partial results
/// with `combine`. `combine` must be associative.
pub fn chunked_reduce<T, U, F, C>(items: &[T], chunk: usize, identity: U, f: F, combine: C) -> U
where
    T: Sync,
    U: Send + Sync + Clone,
    F: Fn(&[T]) -> U + Sync + Send,
    C: Fn(U, U) -> U + Sync + Send,
{
    let chunk = chunk.max(1);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items
            .par_chunks(chunk)
            .map(&f)
            .reduce(|| identity.clone(), &combine)
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.chunks(chunk).map(&f).fold(identity, &combine)
    }
}

/// SplitMix64 finaliser; derives independent sub-seeds from a master seed.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for a named task, so that e.g. bootstrap and permutation streams
/// drawn from the same master seed do not coincide.
pub fn task_seed(master: u64, task: &str) -> u64 {
    task.bytes()
        .fold(sub_seed(master, 0x7461_736b), |acc, b| sub_seed(acc, b as u64))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }

    #[test]
    fn chunked_reduce_matches_sum() {
        let items: Vec<u64> = (1..=1000).collect();
        let s = chunked_reduce(&items, 7, 0u64, |c| c.iter().sum(), |a, b| a + b);
        assert_eq!(s, 500_500);
    }

    #[test]
    fn sub_seeds_differ() {
        let a: Vec<u64> = (0..100).map(|i| sub_seed(42, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_ne!(task_seed(1, "bootstrap"), task_seed(1, "permutation"));
    }
}
