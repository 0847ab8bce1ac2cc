//! Execution-mode switch for the data-parallel loops (settings of a
//! campaign, Monte Carlo seeds, frame samples).
//!
//! With the `parallel` feature disabled every mode runs sequentially, so
//! results never depend on the build configuration: all randomness is
//! keyed by item index, not by scheduling order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when this mode will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

pub fn map_slice<T, R, F>(items: &[T], mode: ExecMode, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

pub fn map_range<R, F>(n: usize, mode: ExecMode, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map_slice(&xs, ExecMode::Sequential, |x| x * x);
        let b = map_slice(&xs, ExecMode::Parallel, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(
            map_range(17, ExecMode::Parallel, |i| i),
            (0..17).collect::<Vec<_>>()
        );
    }
}
