//! CPU and resident memory of this process, sampled from /proc.

use parking_lot::Mutex;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::task::JoinHandle;

const CLOCK_TICKS_PER_SEC: f64 = 100.0;

/// User plus system CPU seconds consumed so far.
pub fn cpu_seconds() -> Option<f64> {
    let stat = std::fs::read_to_string("/proc/self/stat").ok()?;
    // Fields after the parenthesised command name; utime and stime are 14 and 15.
    let rest = &stat[stat.rfind(')')? + 2..];
    let f: Vec<&str> = rest.split_whitespace().collect();
    let utime: f64 = f.get(11)?.parse().ok()?;
    let stime: f64 = f.get(12)?.parse().ok()?;
    Some((utime + stime) / CLOCK_TICKS_PER_SEC)
}

pub fn resident_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Usage {
    /// Cores busy on average, 1.0 = one core.
    pub cpu: f64,
    pub memory_mb: f64,
}

pub struct Sampler {
    samples: Arc<Mutex<Vec<Usage>>>,
    task: JoinHandle<()>,
}

impl Sampler {
    pub fn start(period: Duration) -> Self {
        let samples = Arc::new(Mutex::new(Vec::new()));
        let out = samples.clone();
        let task = tokio::spawn(async move {
            let mut last = (Instant::now(), cpu_seconds().unwrap_or(0.0));
            let mut tick = tokio::time::interval(period);
            tick.tick().await;
            loop {
                tick.tick().await;
                let now = (Instant::now(), cpu_seconds().unwrap_or(0.0));
                let wall = now.0.duration_since(last.0).as_secs_f64();
                if wall > 0.0 {
                    let cpu = (now.1 - last.1).max(0.0) / wall;
                    out.lock().push(Usage { cpu, memory_mb: resident_mb().unwrap_or(0.0) });
                }
                last = now;
            }
        });
        Sampler { samples, task }
    }

    /// Mean of the samples taken so far; one immediate sample if none were.
    pub fn stop(self) -> Usage {
        self.task.abort();
        let s = self.samples.lock();
        if s.is_empty() {
            return Usage { cpu: 0.0, memory_mb: resident_mb().unwrap_or(0.0) };
        }
        let n = s.len() as f64;
        Usage {
            cpu: s.iter().map(|u| u.cpu).sum::<f64>() / n,
            memory_mb: s.iter().map(|u| u.memory_mb).sum::<f64>() / n,
        }
    }
}
