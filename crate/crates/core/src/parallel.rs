//! Trial fan-out and per-trial random streams.
//!
//! Work items are indexed; results always come back in index order, so the
//! choice of execution mode never changes the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, sequential otherwise.
    #[default]
    Parallel,
}

impl std::str::FromStr for Execution {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(Execution::Sequential),
            "parallel" | "par" => Ok(Execution::Parallel),
            _ => Err(crate::Error::InvalidParameter(format!(
                "unknown execution mode `{s}` (expected sequential or parallel)"
            ))),
        }
    }
}

/// `(0..n).map(f)`, possibly on the rayon pool.
pub fn map_indexed<T, F>(n: usize, execution: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Stream `attempt` of trial `trial`. Depends only on its arguments, never on
/// scheduling. Redraws after a rejected sample use the next attempt.
pub fn trial_rng(master_seed: u64, trial: u64, attempt: u64) -> ChaCha8Rng {
    debug_assert!(trial < 1 << 48 && attempt < 1 << 16);
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 16) | attempt);
    rng
}
