//! Order-preserving map that fans out over rayon when the `parallel` feature
//! is on and `NEPHROSCOPE_NO_PARALLEL` is not set to `1`.

use alloc::vec::Vec;

#[cfg(feature = "parallel")]
fn enabled() -> bool {
    !matches!(std::env::var("NEPHROSCOPE_NO_PARALLEL").as_deref(), Ok("1"))
}

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if enabled() && n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
