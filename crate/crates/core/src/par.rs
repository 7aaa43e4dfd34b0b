//! Data-parallel maps. With the `parallel` feature these run on the rayon
//! pool; without it they are plain sequential loops. Results always come back
//! in index order, so downstream folds are deterministic either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Splits `0..n` into chunks of `chunk` and maps each `(start, end)`.
pub fn map_chunks<R, F>(n: u64, chunk: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64, u64) -> R + Sync + Send,
{
    let chunk = chunk.max(1);
    let count = n.div_ceil(chunk) as usize;
    map_range(count, |i| {
        let start = i as u64 * chunk;
        f(start, (start + chunk).min(n))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        assert_eq!(map_range(5, |i| i * i), vec![0, 1, 4, 9, 16]);
        assert_eq!(map_chunks(10, 4, |a, b| (a, b)), vec![(0, 4), (4, 8), (8, 10)]);
        assert_eq!(map_slice(&[1, 2, 3], |v| v + 1), vec![2, 3, 4]);
    }
}
