//! Order-preserving data-parallel map with a process-wide switch between the
//! rayon pool and plain sequential iteration.
//!
//! Every parallel call site in the crate funnels through [`map`], so results
//! are collected in input order regardless of the schedule.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { 1 } else { 0 });

/// Selects the execution mode; `Parallel` falls back to sequential when the
/// crate is built without the `parallel` feature.
pub fn set_mode(mode: ExecMode) {
    MODE.store(
        match mode {
            ExecMode::Sequential => 0,
            ExecMode::Parallel => 1,
        },
        Ordering::SeqCst,
    );
}

pub fn mode() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::SeqCst) == 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Caps the global worker pool. Only the first call has an effect.
pub fn configure_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode() == ExecMode::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Runs a fallible map, returning the first error in input order.
pub fn try_map<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let v: Vec<u64> = (0..1000).collect();
        let out = map(&v, |x| x * x);
        assert!(out.iter().enumerate().all(|(i, &y)| y == (i * i) as u64));
    }

    #[test]
    fn try_map_reports_first_error() {
        let v: Vec<i32> = (0..10).collect();
        let r: Result<Vec<i32>, i32> = try_map(&v, |&x| if x >= 3 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(3));
    }
}
