use std::time::{Duration, Instant};

use pcmg_core::lsgen::{assemble, check_flexibility, BalancingRequirement, LearningSet, LsRecord};
use serde::{Deserialize, Serialize};
use tokio::net::TcpStream;
use tokio::task::JoinSet;
use tokio::time::timeout;

use crate::error::{Error, Result};
use crate::job::{digest, GenerationJob};
use crate::partition::{partition_work, WorkAssignment};
use crate::protocol::{read_message, write_message, Assignment, Message};

#[derive(Debug, Clone, Copy)]
pub struct CoordinatorOptions {
    pub connect_timeout: Duration,
    /// Longest wait for any single frame from a worker.
    pub read_timeout: Duration,
}

impl Default for CoordinatorOptions {
    fn default() -> Self {
        Self {
            connect_timeout: Duration::from_secs(5),
            read_timeout: Duration::from_secs(120),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerTiming {
    pub endpoint: String,
    pub worker_id: u32,
    pub start: u32,
    pub end: u32,
    /// Generation time reported by the worker.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failover {
    pub failed: String,
    pub start: u32,
    pub end: u32,
    pub reason: String,
    pub reassigned_to: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedRun {
    /// Unlabeled; thresholds are applied by the caller.
    pub ls: LearningSet,
    pub timings: Vec<WorkerTiming>,
    pub failovers: Vec<Failover>,
    pub wall_seconds: f64,
}

struct Part {
    records: Vec<LsRecord>,
    skipped: u32,
    seconds: f64,
}

/// Generates a learning set on `workers` and merges it. A worker that fails
/// has its range regenerated on a surviving one.
pub async fn run_coordinator(
    workers: &[String],
    job: &GenerationJob,
    req: BalancingRequirement,
    n: u32,
    seed: u64,
    opts: CoordinatorOptions,
) -> Result<DistributedRun> {
    if workers.is_empty() {
        return Err(Error::NoWorkers);
    }
    if n == 0 {
        return Err(pcmg_core::Error::InvalidParameter("sample count must be at least 1".into()).into());
    }
    let wall = Instant::now();
    let ctx = job.context(req)?;
    check_flexibility(&ctx)?;
    let names = ctx.attribute_names();
    let bytes = job.canonical_bytes();
    let dig = digest(&bytes);

    let mut pending: Vec<(usize, WorkAssignment)> = partition_work(n, workers.len() as u32, seed)?
        .into_iter()
        .enumerate()
        .filter(|(_, a)| !a.is_empty())
        .collect();
    let mut alive = vec![true; workers.len()];
    let mut parts: Vec<(WorkAssignment, Part)> = Vec::new();
    let mut timings = Vec::new();
    let mut failovers = Vec::new();
    let mut failures = Vec::new();

    while !pending.is_empty() {
        let mut set = JoinSet::new();
        for (w, work) in pending.drain(..) {
            let endpoint = workers[w].clone();
            let assign = Assignment {
                work,
                digest: dig,
                requirement: req,
                job: Some(bytes.clone()),
            };
            let attributes = names.len() as u32;
            set.spawn(async move {
                let out = run_assignment(&endpoint, assign, attributes, opts).await;
                (w, work, out)
            });
        }
        let mut failed = Vec::new();
        while let Some(joined) = set.join_next().await {
            let (w, work, out) = joined.map_err(|e| Error::Io(std::io::Error::other(e)))?;
            match out {
                Ok(part) => {
                    log::info!(
                        "{}: samples [{}, {}) in {:.3} s",
                        workers[w],
                        work.start,
                        work.end,
                        part.seconds
                    );
                    timings.push(WorkerTiming {
                        endpoint: workers[w].clone(),
                        worker_id: work.worker_id,
                        start: work.start,
                        end: work.end,
                        seconds: part.seconds,
                    });
                    parts.push((work, part));
                }
                Err(e) => {
                    alive[w] = false;
                    failures.push(format!("{}: {e}", workers[w]));
                    failed.push((w, work, e.to_string()));
                }
            }
        }
        let survivors: Vec<usize> = (0..workers.len()).filter(|&w| alive[w]).collect();
        if !failed.is_empty() && survivors.is_empty() {
            return Err(Error::AllWorkersFailed(failures));
        }
        for (k, (w, work, reason)) in failed.into_iter().enumerate() {
            let to = survivors[k % survivors.len()];
            log::warn!(
                "{} failed on [{}, {}): {reason}; reassigning to {}",
                workers[w],
                work.start,
                work.end,
                workers[to]
            );
            failovers.push(Failover {
                failed: workers[w].clone(),
                start: work.start,
                end: work.end,
                reason,
                reassigned_to: workers[to].clone(),
            });
            pending.push((to, work));
        }
    }

    parts.sort_by_key(|(w, _)| w.start);
    let mut records = Vec::with_capacity(n as usize);
    let mut skipped = 0;
    let mut next = 0;
    for (work, part) in parts {
        if work.start != next {
            return Err(Error::Incomplete(format!("samples [{next}, {}) missing", work.start)));
        }
        next = work.end;
        skipped += part.skipped;
        records.extend(part.records);
    }
    if next != n {
        return Err(Error::Incomplete(format!("samples [{next}, {n}) missing")));
    }
    let ls = assemble(names, seed, n, records, skipped)?;
    Ok(DistributedRun {
        ls,
        timings,
        failovers,
        wall_seconds: wall.elapsed().as_secs_f64(),
    })
}

async fn run_assignment(endpoint: &str, assign: Assignment, attributes: u32, opts: CoordinatorOptions) -> Result<Part> {
    let mut stream = timeout(opts.connect_timeout, TcpStream::connect(endpoint))
        .await
        .map_err(|_| Error::Timeout(opts.connect_timeout))??;
    stream.set_nodelay(true)?;
    let work = assign.work;
    write_message(&mut stream, &Message::Hello { name: "coordinator".into() }).await?;
    match next(&mut stream, opts).await? {
        Message::Hello { .. } => {}
        Message::Error { message } => return Err(Error::Remote(message)),
        _ => return Err(Error::Unexpected("reply to HELLO")),
    }
    write_message(&mut stream, &Message::Assign(assign)).await?;

    let mut records: Vec<LsRecord> = Vec::with_capacity(work.len() as usize);
    let mut skipped = 0;
    loop {
        match next(&mut stream, opts).await? {
            Message::Samples {
                attributes: a,
                records: batch,
                skipped: s,
            } => {
                if a != attributes {
                    return Err(Error::Incomplete(format!("{a} attributes per sample, expected {attributes}")));
                }
                for r in batch {
                    let in_order = records.last().map_or(true, |p| p.sample_index < r.sample_index);
                    if !(work.start..work.end).contains(&r.sample_index) || !in_order {
                        return Err(Error::Incomplete(format!("sample {} out of place", r.sample_index)));
                    }
                    records.push(r);
                }
                skipped += s;
            }
            Message::Done(d) => {
                let count = records.len() as u32;
                if (d.start, d.end) != (work.start, work.end) || d.kept != count || d.skipped != skipped {
                    return Err(Error::Incomplete(format!(
                        "worker reported {} kept and {} skipped, received {count} and {skipped}",
                        d.kept, d.skipped
                    )));
                }
                if count + skipped != work.len() {
                    return Err(Error::Incomplete(format!(
                        "{} of {} samples accounted for",
                        count + skipped,
                        work.len()
                    )));
                }
                return Ok(Part {
                    records,
                    skipped,
                    seconds: d.seconds,
                });
            }
            Message::Error { message } => return Err(Error::Remote(message)),
            _ => return Err(Error::Unexpected("reply to ASSIGN")),
        }
    }
}

async fn next(stream: &mut TcpStream, opts: CoordinatorOptions) -> Result<Message> {
    match timeout(opts.read_timeout, read_message(stream)).await {
        Err(_) => Err(Error::Timeout(opts.read_timeout)),
        Ok(Ok(Some(m))) => Ok(m),
        Ok(Ok(None)) => Err(Error::Incomplete("worker closed the connection".into())),
        Ok(Err(e)) => Err(e),
    }
}
