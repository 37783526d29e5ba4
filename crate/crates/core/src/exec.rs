//! Chunked execution layer: rayon when the `parallel` feature is enabled,
//! plain loops otherwise. Work is split into fixed chunks keyed by item
//! index and results are returned in chunk order, so both backends produce
//! identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f(start, len)` over `0..total` split into chunks of at most `chunk`
/// items. Results come back in chunk order.
pub(crate) fn map_chunks<T, F>(total: u64, chunk: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync,
{
    assert!(chunk > 0);
    let n_chunks = total.div_ceil(chunk);
    let run = |i: u64| {
        let start = i * chunk;
        f(start, chunk.min(total - start))
    };
    #[cfg(feature = "parallel")]
    {
        (0..n_chunks).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_chunks).map(run).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunks_cover_the_range_in_order() {
        let spans = map_chunks(10, 3, |s, l| (s, l));
        assert_eq!(spans, vec![(0, 3), (3, 3), (6, 3), (9, 1)]);
        assert!(map_chunks(0, 4, |s, l| (s, l)).is_empty());
    }
}
