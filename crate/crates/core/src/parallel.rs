//! Deterministic parallel mapping with an environment-controlled thread
//! count.
//!
//! `SAGEFIT_THREADS` selects the execution mode: unset or `0` uses the
//! default thread pool, `1` runs serially on the calling thread, and `n ≥ 2`
//! builds a dedicated n-thread pool. Results are collected in index order,
//! so output is identical across all modes — parallelism only changes wall
//! time, never bytes.

use std::sync::OnceLock;

use rayon::prelude::*;

/// Environment variable naming the thread count.
pub const THREADS_ENV_VAR: &str = "SAGEFIT_THREADS";

enum Mode {
    Auto,
    Serial,
    Pool(rayon::ThreadPool),
}

/// The mode is resolved once per process; later changes to the environment
/// variable have no effect.
fn mode() -> &'static Mode {
    static MODE: OnceLock<Mode> = OnceLock::new();
    MODE.get_or_init(|| match configured_threads() {
        None | Some(0) => Mode::Auto,
        Some(1) => Mode::Serial,
        Some(n) => Mode::Pool(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool construction"),
        ),
    })
}

/// Parses `SAGEFIT_THREADS`; `None` when unset or unparseable (treated as
/// automatic).
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV_VAR)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
}

/// Maps `f` over `0..n`, in parallel when the mode allows, collecting
/// results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode() {
        Mode::Serial => (0..n).map(f).collect(),
        Mode::Auto => (0..n).into_par_iter().map(f).collect(),
        Mode::Pool(pool) => pool.install(|| (0..n).into_par_iter().map(f).collect()),
    }
}
