//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, work runs on a rayon pool sized by the
//! caller. Without it every helper degrades to a plain iterator. Results are
//! always collected in input order, so the parallelism degree never changes
//! values.

/// Requested parallelism degree. `1` always takes the sequential path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Jobs(usize);

impl Jobs {
    pub fn new(n: usize) -> Self {
        Jobs(n.max(1))
    }

    pub fn sequential() -> Self {
        Jobs(1)
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn is_sequential(self) -> bool {
        self.0 == 1 || !cfg!(feature = "parallel")
    }
}

impl Default for Jobs {
    fn default() -> Self {
        Jobs::sequential()
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, U, F>(jobs: Jobs, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if !jobs.is_sequential() {
            use rayon::prelude::*;
            return with_pool(jobs, || items.par_iter().map(&f).collect());
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// Like [`map`] for fallible work; the first error in input order wins.
pub fn try_map<T, U, E, F>(jobs: Jobs, items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(&T) -> Result<U, E> + Sync + Send,
{
    map(jobs, items, f).into_iter().collect()
}

#[cfg(feature = "parallel")]
fn with_pool<R: Send>(jobs: Jobs, op: impl FnOnce() -> R + Send) -> R {
    if rayon::current_thread_index().is_some() && rayon::current_num_threads() == jobs.get() {
        return op();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.get()).build() {
        Ok(pool) => pool.install(op),
        Err(e) => {
            log::warn!("could not build a {}-thread pool ({e}); using the global pool", jobs.get());
            op()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map(Jobs::sequential(), &xs, |x| x * x);
        let par = map(Jobs::new(4), &xs, |x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_wins() {
        let xs: Vec<i32> = (0..100).collect();
        let r: Result<Vec<i32>, i32> =
            try_map(Jobs::new(3), &xs, |&x| if x % 10 == 7 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(7));
    }

    #[test]
    fn zero_jobs_clamps_to_one() {
        assert_eq!(Jobs::new(0).get(), 1);
    }
}
