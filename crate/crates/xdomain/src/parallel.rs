use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use xdomain_core::protocol::Executor;

/// Runs jobs on a fixed number of scoped worker threads.
///
/// Jobs are handed out in index order and results come back in index order,
/// so the outcome never depends on the number of workers.
#[derive(Debug, Clone, Copy)]
pub struct Threads {
    jobs: usize,
}

impl Threads {
    /// `jobs == 0` is treated as 1.
    pub fn new(jobs: usize) -> Self {
        Self { jobs: jobs.max(1) }
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }
}

impl Executor for Threads {
    fn run_all<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        let workers = self.jobs.min(count);
        if workers <= 1 {
            return (0..count).map(job).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= count {
                        break;
                    }
                    let out = job(i);
                    slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(out);
                });
            }
        });
        slots
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .into_iter()
            .map(|slot| slot.expect("every job index is claimed exactly once"))
            .collect()
    }
}
