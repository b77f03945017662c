//! Virtual-time FIFO multi-server queue used for invocation round trips.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admission {
    pub start_ms: f64,
    pub finish_ms: f64,
}

impl Admission {
    pub fn wait_ms(&self, arrival_ms: f64) -> f64 {
        self.start_ms - arrival_ms
    }
}

/// `c` identical servers serving jobs in arrival order; `None` servers means
/// every job starts on arrival.
#[derive(Debug, Clone)]
pub struct ServerPool {
    free_at: Option<Vec<f64>>,
}

impl ServerPool {
    pub fn bounded(servers: usize) -> Self {
        ServerPool { free_at: Some(vec![f64::NEG_INFINITY; servers.max(1)]) }
    }

    pub fn unbounded() -> Self {
        ServerPool { free_at: None }
    }

    fn earliest(&self) -> Option<(usize, f64)> {
        self.free_at.as_ref().map(|v| {
            v.iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (i, t)| if t < best.1 { (i, t) } else { best })
        })
    }

    /// Wait a job arriving at `arrival_ms` would see, without admitting it.
    pub fn expected_wait(&self, arrival_ms: f64) -> f64 {
        self.earliest().map_or(0.0, |(_, t)| (t - arrival_ms).max(0.0))
    }

    /// Admits a job. Callers must admit in non-decreasing arrival order for
    /// FIFO semantics. Returns `None` (and admits nothing) if the wait would
    /// exceed `max_wait_ms`.
    pub fn admit(&mut self, arrival_ms: f64, service_ms: f64, max_wait_ms: f64) -> Option<Admission> {
        let Some((idx, free)) = self.earliest() else {
            return Some(Admission { start_ms: arrival_ms, finish_ms: arrival_ms + service_ms });
        };
        let start = arrival_ms.max(free);
        if start - arrival_ms > max_wait_ms {
            return None;
        }
        let finish = start + service_ms;
        self.free_at.as_mut().expect("bounded")[idx] = finish;
        Some(Admission { start_ms: start, finish_ms: finish })
    }

    /// Servers still busy at `now_ms`.
    pub fn busy(&self, now_ms: f64) -> usize {
        self.free_at.as_ref().map_or(0, |v| v.iter().filter(|&&t| t > now_ms).count())
    }

    pub fn capacity(&self) -> Option<usize> {
        self.free_at.as_ref().map(Vec::len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    /// Brute force: advance an integer clock one tick at a time, hand queued
    /// jobs to idle servers in arrival order.
    fn tick_simulation(servers: usize, jobs: &[(u64, u64)]) -> Vec<(u64, u64)> {
        let mut out = vec![(0, 0); jobs.len()];
        let mut busy_until = vec![0u64; servers];
        let mut queue: VecDeque<usize> = VecDeque::new();
        let mut next = 0;
        let mut done = 0;
        let mut t = 0u64;
        while done < jobs.len() {
            while next < jobs.len() && jobs[next].0 == t {
                queue.push_back(next);
                next += 1;
            }
            for s in 0..servers {
                if busy_until[s] <= t {
                    if let Some(j) = queue.pop_front() {
                        busy_until[s] = t + jobs[j].1;
                        out[j] = (t, t + jobs[j].1);
                        done += 1;
                    }
                }
            }
            t += 1;
        }
        out
    }

    #[test]
    fn twelve_jobs_on_two_cores() {
        let mut pool = ServerPool::bounded(2);
        let finishes: Vec<f64> = (0..12)
            .map(|_| pool.admit(0.0, 1000.0, f64::INFINITY).unwrap().finish_ms)
            .collect();
        assert_eq!(finishes.iter().cloned().fold(0.0, f64::max), 6000.0);
        let mean = finishes.iter().sum::<f64>() / 12.0;
        assert_eq!(mean, 3500.0);
    }

    #[test]
    fn unbounded_never_waits() {
        let mut pool = ServerPool::unbounded();
        for _ in 0..384 {
            let a = pool.admit(5.0, 1000.0, 0.0).unwrap();
            assert_eq!(a.wait_ms(5.0), 0.0);
        }
        assert_eq!(pool.busy(10.0), 0);
    }

    #[test]
    fn queue_timeout_admits_nothing() {
        let mut pool = ServerPool::bounded(1);
        pool.admit(0.0, 100.0, 0.0).unwrap();
        assert!(pool.admit(0.0, 100.0, 50.0).is_none());
        assert_eq!(pool.admit(0.0, 100.0, 100.0).unwrap().start_ms, 100.0);
        assert_eq!(pool.expected_wait(0.0), 200.0);
    }

    proptest! {
        #[test]
        fn matches_tick_simulation(
            servers in 1usize..5,
            mut jobs in prop::collection::vec((0u64..40, 1u64..15), 1..30),
        ) {
            jobs.sort_by_key(|j| j.0);
            let oracle = tick_simulation(servers, &jobs);
            let mut pool = ServerPool::bounded(servers);
            for (j, &(arrival, service)) in jobs.iter().enumerate() {
                let a = pool.admit(arrival as f64, service as f64, f64::INFINITY).unwrap();
                prop_assert_eq!((a.start_ms, a.finish_ms), (oracle[j].0 as f64, oracle[j].1 as f64));
            }
        }
    }
}
