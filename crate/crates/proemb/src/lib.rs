//! Files, configuration and the command line around `proemb-core`.
//!
//! - [`config`]: flat `key = value` experiment configs and `config.lock`.
//! - [`formats`]: edge lists, panels, proxies, checkpoints, estimates and tables.
//! - [`cli`]: the `generate`, `estimate`, `run`, `sweep` and `report` subcommands.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;

pub use error::{Error, Result};

/// Keeps freed training buffers in the heap instead of returning them to the
/// kernel after every minibatch. Only has an effect with glibc.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds and is called before
    // any other thread exists.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 32 << 20);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 512 << 20);
    }
}
