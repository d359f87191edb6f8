//! Small helper for running independent jobs on a bounded worker pool.
//!
//! The worker count defaults to the available parallelism and is capped by
//! the `QIS_LAB_THREADS` environment variable. Results always come back in
//! job order, so parallel execution never changes output.

/// Worker count: `min(available_parallelism, QIS_LAB_THREADS)`, at least 1.
pub fn worker_count() -> usize {
    let avail = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    match std::env::var("QIS_LAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        Some(cap) if cap >= 1 => avail.min(cap),
        _ => avail,
    }
}

/// Map `f` over `jobs`, running up to [`worker_count`] jobs concurrently.
/// The output vector is ordered like the input regardless of scheduling.
pub fn ordered_map<T, R, F>(jobs: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync,
{
    let workers = worker_count();
    if workers <= 1 || jobs.len() <= 1 {
        return jobs.into_iter().map(f).collect();
    }

    let n = jobs.len();
    let queue: Vec<std::sync::Mutex<Option<T>>> =
        jobs.into_iter().map(|j| std::sync::Mutex::new(Some(j))).collect();
    let results: Vec<std::sync::Mutex<Option<R>>> =
        (0..n).map(|_| std::sync::Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);

    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let job = queue[i].lock().unwrap().take().unwrap();
                *results[i].lock().unwrap() = Some(f(job));
            });
        }
    });

    results
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().unwrap())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_preserves_order() {
        let out = ordered_map((0..100).collect(), |i: i32| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn worker_count_at_least_one() {
        assert!(worker_count() >= 1);
    }
}
