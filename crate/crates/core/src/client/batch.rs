use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{Backend, ChatRequest, ClientError};

/// Applies `f` to every item with at most `max_concurrency` calls running at
/// once. Results come back in input order.
pub fn par_map<T, R, F>(items: &[T], max_concurrency: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = max_concurrency.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(i, &items[i]);
                slots.lock().expect("result lock")[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every index is processed"))
        .collect()
}

/// Sends every request; failures are reported per index, not fail-fast.
pub fn run_batch<B: Backend + ?Sized>(backend: &B, requests: &[ChatRequest], max_concurrency: usize) -> Vec<Result<String, ClientError>> {
    par_map(requests, max_concurrency, |_, req| backend.send(req))
}
