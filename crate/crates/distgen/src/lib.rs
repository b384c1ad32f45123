//! Learning sets generated across networked workers. Samples depend only on
//! `(seed, index)`, so the merged set matches single-process generation
//! byte for byte however the index range is split.

pub mod coordinator;
pub mod error;
pub mod job;
pub mod partition;
pub mod protocol;
pub mod worker;

pub use coordinator::{run_coordinator, CoordinatorOptions, DistributedRun, Failover, WorkerTiming};
pub use error::{Error, Result};
pub use job::GenerationJob;
pub use partition::{partition_work, WorkAssignment};
pub use worker::{run_worker, spawn_worker, WorkerOptions};

/// Environment variable holding the default comma-separated worker list.
pub const WORKERS_ENV: &str = "PCMG_WORKERS";

/// Splits a comma-separated `host:port` list, dropping blanks.
pub fn parse_worker_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|w| !w.is_empty()).map(String::from).collect()
}
