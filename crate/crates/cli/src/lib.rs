//! Command-line front end for the cross-correlation library.
//!
//! The binary is a thin wrapper over this crate so that integration tests
//! can drive every subcommand in-process.

pub mod commands;
pub mod config;
pub mod pipeline;

/// Runs `f` inside a rayon pool of `workers` threads.
///
/// `workers == 0` keeps the default pool. Without the `parallel` feature the
/// closure runs on the current thread and a worker request above one is only
/// worth a warning, not an error, so configs stay portable across builds.
#[cfg(feature = "parallel")]
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::error!("cannot build a {workers}-thread pool ({e}); using the default pool");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers > 1 {
        log::warn!("built without parallel support; running {workers}-worker request on one thread");
    }
    f()
}
