use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use parking_lot::Mutex;

/// Applies `f` to `0..n` on up to `workers` scoped threads and returns the
/// results in index order. Stops handing out work after the first error.
pub fn parallel_map<T, E, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    let first_err: Mutex<Option<(usize, E)>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.min(n) {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                match f(i) {
                    Ok(v) => slots.lock()[i] = Some(v),
                    Err(e) => {
                        failed.store(true, Ordering::Relaxed);
                        let mut slot = first_err.lock();
                        if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                            *slot = Some((i, e));
                        }
                    }
                }
            });
        }
    });
    if let Some((_, e)) = first_err.into_inner() {
        return Err(e);
    }
    Ok(slots
        .into_inner()
        .into_iter()
        .map(|v| v.expect("every index completed"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_results_and_errors() {
        let out: Result<Vec<usize>, ()> = parallel_map(8, 1000, |i| Ok(i * 2));
        assert_eq!(out.unwrap(), (0..1000).map(|i| i * 2).collect::<Vec<_>>());
        let err = parallel_map(4, 100, |i| if i == 37 { Err(i) } else { Ok(i) });
        assert_eq!(err, Err(37));
    }
}
