//! Fixed-size worker pool with input-ordered results.

use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use crossbeam_channel::{bounded, unbounded};

use crate::{PipelineError, Result};

/// Apply `f` to every item on `workers` threads and return the results in
/// input order. The producer (usually a frame decoder) runs on the calling
/// thread with at most `2 × workers` items in flight. Feeding stops at the
/// first error from either side; the error for the earliest item wins.
pub fn map_ordered<T, R, I, F>(items: I, workers: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    I: IntoIterator<Item = Result<T>>,
    F: Fn(T) -> Result<R> + Sync,
{
    if workers == 0 {
        return Err(PipelineError::Config("worker_count must be at least 1".into()));
    }
    let (job_tx, job_rx) = bounded::<(usize, T)>(workers * 2);
    let (res_tx, res_rx) = unbounded::<(usize, Result<R>)>();
    let failed = AtomicBool::new(false);
    let (f, failed_ref) = (&f, &failed);
    let mut results: Vec<(usize, Result<R>)> = Vec::new();
    thread::scope(|s| {
        for _ in 0..workers {
            let (job_rx, res_tx) = (job_rx.clone(), res_tx.clone());
            s.spawn(move || {
                for (seq, item) in job_rx {
                    let r = f(item);
                    if r.is_err() {
                        failed_ref.store(true, Ordering::Relaxed);
                    }
                    // The receiver outlives every worker.
                    let _ = res_tx.send((seq, r));
                }
            });
        }
        drop(res_tx);
        for (seq, item) in items.into_iter().enumerate() {
            if failed.load(Ordering::Relaxed) {
                break;
            }
            let item = item.map_err(|e| (seq, e));
            match item {
                Ok(item) => {
                    if job_tx.send((seq, item)).is_err() {
                        break;
                    }
                }
                Err((seq, e)) => {
                    results.push((seq, Err(e)));
                    break;
                }
            }
        }
        drop(job_tx);
        results.extend(res_rx.iter());
    });
    results.sort_by_key(|(seq, _)| *seq);
    results.into_iter().map(|(_, r)| r).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_input_order_for_any_worker_count() {
        for workers in [1, 2, 7] {
            let out = map_ordered((0..100u64).map(Ok), workers, |x| Ok(x * x)).unwrap();
            assert_eq!(out, (0..100u64).map(|x| x * x).collect::<Vec<_>>());
        }
    }

    #[test]
    fn earliest_error_wins() {
        let items = (0..50u64).map(|i| {
            if i == 40 {
                Err(PipelineError::Input("feed".into()))
            } else {
                Ok(i)
            }
        });
        let err = map_ordered(items, 3, |x| {
            if x == 7 {
                Err(PipelineError::Backend("work".into()))
            } else {
                Ok(x)
            }
        });
        assert!(matches!(err, Err(PipelineError::Backend(_))));
        assert!(map_ordered((0..3u64).map(Ok), 0, Ok).is_err());
    }
}
