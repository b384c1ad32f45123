use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use pcmg_core::lsgen::{generate_sample, LsRecord};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;

use crate::error::{Error, Result};
use crate::job::{digest, GenerationJob};
use crate::protocol::{read_message, write_message, Assignment, DoneReport, Message};

#[derive(Debug, Clone)]
pub struct WorkerOptions {
    pub name: String,
    /// Records per SAMPLES frame.
    pub batch_size: usize,
    /// Drop the connection after streaming this many records of an
    /// assignment, as a crashed worker would. For fault-injection tests.
    pub fail_after: Option<u32>,
}

impl Default for WorkerOptions {
    fn default() -> Self {
        Self {
            name: "worker".into(),
            batch_size: 64,
            fail_after: None,
        }
    }
}

/// Jobs this worker has received, by digest.
type JobCache = Arc<Mutex<HashMap<[u8; 32], Arc<GenerationJob>>>>;

/// Accepts coordinator connections until the listener fails.
pub async fn run_worker(listener: TcpListener, opts: WorkerOptions) -> Result<()> {
    let cache: JobCache = Arc::default();
    loop {
        let (stream, peer) = listener.accept().await?;
        let opts = opts.clone();
        let cache = cache.clone();
        tokio::spawn(async move {
            if let Err(e) = serve_connection(stream, &opts, &cache).await {
                log::warn!("{}: connection from {peer} ended: {e}", opts.name);
            }
        });
    }
}

/// Binds `addr` and serves in a background task. Returns the bound address.
pub async fn spawn_worker(addr: &str, opts: WorkerOptions) -> Result<(SocketAddr, tokio::task::JoinHandle<Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(run_worker(listener, opts))))
}

async fn serve_connection(mut stream: TcpStream, opts: &WorkerOptions, cache: &JobCache) -> Result<()> {
    stream.set_nodelay(true)?;
    loop {
        let msg = match read_message(&mut stream).await {
            Ok(Some(m)) => m,
            Ok(None) => return Ok(()),
            Err(Error::UnsupportedVersion(v)) => {
                write_message(&mut stream, &Message::error(format!("unsupported protocol version {v}"))).await?;
                continue;
            }
            Err(Error::Malformed(m)) => {
                let _ = write_message(&mut stream, &Message::error(format!("malformed frame: {m}"))).await;
                return Err(Error::Malformed(m));
            }
            Err(e) => return Err(e),
        };
        match msg {
            Message::Hello { .. } => {
                write_message(&mut stream, &Message::Hello { name: opts.name.clone() }).await?;
            }
            Message::Assign(a) => {
                let job = match resolve_job(&a, cache) {
                    Ok(job) => job,
                    Err(reason) => {
                        write_message(&mut stream, &Message::error(reason)).await?;
                        continue;
                    }
                };
                if !generate(&mut stream, &a, job, opts).await? {
                    return Ok(());
                }
            }
            other => {
                let _ = write_message(&mut stream, &Message::error(format!("unexpected {:?}", other.kind()))).await;
                return Err(Error::Unexpected("coordinator-bound"));
            }
        }
    }
}

fn resolve_job(a: &Assignment, cache: &JobCache) -> std::result::Result<Arc<GenerationJob>, String> {
    let mut cache = cache.lock().expect("job cache poisoned");
    match &a.job {
        Some(bytes) => {
            if digest(bytes) != a.digest {
                return Err("scenario mismatch".into());
            }
            let job = Arc::new(GenerationJob::from_bytes(bytes).map_err(|e| e.to_string())?);
            cache.insert(a.digest, job.clone());
            Ok(job)
        }
        None => cache.get(&a.digest).cloned().ok_or_else(|| "scenario mismatch".into()),
    }
}

/// Streams one assignment. Returns `false` when the connection was dropped
/// on purpose.
async fn generate(stream: &mut TcpStream, a: &Assignment, job: Arc<GenerationJob>, opts: &WorkerOptions) -> Result<bool> {
    let ctx = match job.context(a.requirement) {
        Ok(c) => c,
        Err(e) => {
            write_message(stream, &Message::error(e.to_string())).await?;
            return Ok(true);
        }
    };
    let attributes = ctx.attribute_names().len() as u32;
    let started = Instant::now();
    let (tx, mut rx) = mpsc::channel::<pcmg_core::Result<(Vec<LsRecord>, u32)>>(4);
    let (seed, start, end) = (a.work.seed, a.work.start, a.work.end);
    let batch = opts.batch_size.max(1);
    let producer = tokio::task::spawn_blocking(move || {
        let mut records = Vec::with_capacity(batch);
        let mut skipped = 0;
        for i in start..end {
            match generate_sample(&ctx, seed, i) {
                Ok(Some(s)) => records.push(pcmg_core::lsgen::LsRecord::from_sample(&ctx, &s)),
                Ok(None) => skipped += 1,
                Err(e) => {
                    let _ = tx.blocking_send(Err(e));
                    return;
                }
            }
            if records.len() == batch || i + 1 == end {
                let full = std::mem::replace(&mut records, Vec::with_capacity(batch));
                if tx.blocking_send(Ok((full, skipped))).is_err() {
                    return;
                }
                skipped = 0;
            }
        }
    });

    let (mut kept, mut skipped, mut sent) = (0u32, 0u32, 0u32);
    while let Some(part) = rx.recv().await {
        let (records, skip) = match part {
            Ok(p) => p,
            Err(e) => {
                write_message(stream, &Message::error(e.to_string())).await?;
                return Ok(true);
            }
        };
        if let Some(limit) = opts.fail_after {
            if sent + records.len() as u32 > limit {
                let head: Vec<LsRecord> = records.into_iter().take((limit - sent) as usize).collect();
                write_message(stream, &Message::Samples { attributes, records: head, skipped: 0 }).await?;
                log::warn!("{}: dropping connection mid-assignment", opts.name);
                drop(rx);
                return Ok(false);
            }
        }
        kept += records.len() as u32;
        skipped += skip;
        sent += records.len() as u32;
        write_message(stream, &Message::Samples { attributes, records, skipped: skip }).await?;
    }
    producer.await.map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let done = DoneReport {
        start,
        end,
        kept,
        skipped,
        seconds: started.elapsed().as_secs_f64(),
    };
    write_message(stream, &Message::Done(done)).await?;
    Ok(true)
}
