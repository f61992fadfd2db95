use rayon::prelude::*;

/// Maps `f` over `0..n`, serially or on the rayon pool. Output order is the
/// index order in both cases, so results are identical.
pub(crate) fn map_range<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Like [`map_range`] with a per-worker scratch value.
pub(crate) fn map_range_with<S, T, I, F>(n: usize, parallel: bool, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).collect()
    } else {
        let mut s = init();
        (0..n).map(|i| f(&mut s, i)).collect()
    }
}
