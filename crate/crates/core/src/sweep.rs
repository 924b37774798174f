//! Runs independent jobs over a worker pool, or sequentially when the
//! `parallel` feature is off. Results always come back in input order.

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "IMPULSE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Worker count; `0` lets the pool decide.
    Parallel(usize),
}

impl Execution {
    /// Parallel with `IMPULSE_WORKERS` threads when set, else the pool default.
    /// Falls back to sequential without the `parallel` feature.
    pub fn from_env() -> Self {
        if !cfg!(feature = "parallel") {
            return Execution::Sequential;
        }
        match std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse::<usize>().ok()) {
            Some(1) => Execution::Sequential,
            Some(n) => Execution::Parallel(n),
            None => Execution::Parallel(0),
        }
    }
}

pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        Execution::Sequential => items.iter().map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel(workers) => {
            use rayon::prelude::*;
            if workers == 0 {
                return items.par_iter().map(f).collect();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
                Err(_) => items.iter().map(f).collect(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        Execution::Parallel(_) => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map(&items, Execution::Sequential, |x| x * x);
        assert_eq!(map(&items, Execution::Parallel(4), |x| x * x), seq);
        assert_eq!(map(&items, Execution::Parallel(0), |x| x * x), seq);
    }
}
