//! Data-parallel map helpers with a sequential fallback.
//!
//! With the `parallel` feature (default), [`map_collect`] fans work out over
//! rayon's global pool; without it, the same call compiles to a plain
//! sequential loop. Output order always matches input order, so reductions
//! over the result are deterministic regardless of worker count.
//! [`map_collect_seq`] is always sequential and exists so benchmarks can
//! compare both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
pub fn map_collect<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    I: Send,
    O: Send,
    F: Fn(I) -> O + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Sequential counterpart of [`map_collect`].
pub fn map_collect_seq<I, O, F>(items: Vec<I>, f: F) -> Vec<O>
where
    F: Fn(I) -> O,
{
    items.into_iter().map(f).collect()
}

/// Map `f` over indices `0..n`, preserving index order.
pub fn map_indices<O, F>(n: usize, f: F) -> Vec<O>
where
    O: Send,
    F: Fn(usize) -> O + Sync + Send,
{
    map_collect((0..n).collect(), f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let par = map_collect(items.clone(), |x| x * x);
        let seq = map_collect_seq(items, |x| x * x);
        assert_eq!(par, seq);
    }

    #[test]
    fn order_is_input_order() {
        let out = map_indices(100, |i| i as i64 - 50);
        assert_eq!(out[0], -50);
        assert_eq!(out[99], 49);
    }
}
