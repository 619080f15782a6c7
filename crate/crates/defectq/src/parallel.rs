//! Worker pool sized by `DEFECTQ_THREADS` when set.

use rayon::ThreadPool;

use crate::error::{Error, Result};

pub fn worker_pool() -> Result<ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("DEFECTQ_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| {
            Error::InvalidParameter(format!("DEFECTQ_THREADS={v:?} is not a thread count"))
        })?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}
