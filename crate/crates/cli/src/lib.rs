//! `pcmg` command line. Every planning command is a client of the pcmg
//! service; without `--server` an embedded instance is started on a
//! loopback port for the duration of the command.

pub mod report;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pcmg_api::*;
use pcmg_client::{Client, SERVER_ENV};
use pcmg_core::balancer::{islanding_requirement, DEFAULT_LEVELS};
use pcmg_core::lsgen::{canonical, generate_ls, BalancingRequirement};
use pcmg_core::Scenario;
use pcmg_distgen::{parse_worker_list, spawn_worker, GenerationJob, WorkerOptions, WORKERS_ENV};
use serde::Serialize;
use tokio::net::TcpListener;

#[derive(Debug, Parser)]
#[command(name = "pcmg", version, about = "Decision-tree balancing and storage planning for planned-community microgrids")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Scenario file; the bundled scenario when omitted.
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Learning-set size per run.
    #[arg(long, global = true, default_value_t = 1000)]
    pub samples: u32,
    /// Profitability levels in percent, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = DEFAULT_LEVELS.map(|l| l * 100.0))]
    pub levels: Vec<f64>,
    /// Directory for the report files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Service URL; an embedded service is used when unset.
    #[arg(long, global = true, env = SERVER_ENV)]
    pub server: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Deficit and excess schedules for the next hour.
    PlanHour,
    /// Schedules for balancing a forced disconnection.
    PlanIslanding,
    /// Annual deviation cost of every storage option.
    PlanStorage {
        /// Hourly loading for the year (kW, one value per line).
        #[arg(long)]
        profile: Option<PathBuf>,
    },
    /// Misclassification rates averaged over repeated islanding runs.
    EvaluateMr {
        #[arg(long, default_value_t = 10)]
        repeats: u32,
    },
    /// Serve learning-set generation to a coordinator.
    ServeWorker {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value = "worker")]
        name: String,
    },
    /// Generate a learning set on networked workers.
    RunDistributed {
        /// Worker endpoints, `host:port`, comma separated.
        #[arg(long, env = WORKERS_ENV, value_delimiter = ',')]
        workers: Vec<String>,
        /// Start this many workers in-process and add them to the list.
        #[arg(long, default_value_t = 0)]
        spawn: u32,
        /// Label the merged set at this top percentage.
        #[arg(long)]
        top: Option<f64>,
        /// Compare against single-process generation.
        #[arg(long)]
        verify: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::PlanHour => "plan-hour",
            Command::PlanIslanding => "plan-islanding",
            Command::PlanStorage { .. } => "plan-storage",
            Command::EvaluateMr { .. } => "evaluate-mr",
            Command::ServeWorker { .. } => "serve-worker",
            Command::RunDistributed { .. } => "run-distributed",
            Command::Serve { .. } => "serve",
        }
    }
}

pub fn load_scenario(path: Option<&Path>) -> anyhow::Result<Scenario> {
    match path {
        Some(p) => Scenario::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(Scenario::bundled()),
    }
}

impl Global {
    fn params(&self) -> RunParams {
        RunParams {
            seed: self.seed,
            samples: self.samples,
            levels: self.levels.iter().map(|l| l / 100.0).collect(),
        }
    }

    async fn client(&self) -> anyhow::Result<Client> {
        match &self.server {
            Some(url) => Ok(Client::new(url)),
            None => {
                let (addr, _) = pcmg_server::spawn("127.0.0.1:0").await.context("starting embedded service")?;
                Ok(Client::new(&format!("http://{addr}")))
            }
        }
    }
}

/// Writes `<stem>.txt` and `<stem>.json` under `dir`.
fn write_files<T: Serialize>(dir: &Path, stem: &str, text: &str, value: &T) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join(format!("{stem}.txt")), text)?;
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}

/// Distributed-run fields that do not depend on timing.
#[derive(Serialize)]
struct DistributedSummary<'a> {
    header: &'a ReportHeader,
    requirement: &'a BalancingRequirement,
    attempted: u32,
    kept: u32,
    skipped: u32,
    ls_sha256: &'a str,
}

pub async fn run(cli: Cli) -> anyhow::Result<()> {
    let g = &cli.global;
    let name = cli.command.name();
    let stem = format!("{name}-seed{}", g.seed);
    match cli.command {
        Command::Serve { listen } => {
            let listener = TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
            println!("pcmg service listening on {}", listener.local_addr()?);
            pcmg_server::serve(listener).await?;
            return Ok(());
        }
        Command::ServeWorker { listen, name } => {
            let listener = TcpListener::bind(&listen).await.with_context(|| format!("binding {listen}"))?;
            println!("worker {name} listening on {}", listener.local_addr()?);
            pcmg_distgen::run_worker(listener, WorkerOptions { name, ..WorkerOptions::default() }).await?;
            return Ok(());
        }
        _ => {}
    }

    let scenario = load_scenario(g.scenario.as_deref())?;
    let client = g.client().await?;
    let params = g.params();
    let mut extra = String::new();
    let (text, written) = match cli.command {
        Command::PlanHour => {
            let r = client.plan_hour(&PlanRequest { scenario, params }).await?;
            let text = report::hour(&r);
            (text.clone(), g.out.as_ref().map(|d| write_files(d, &stem, &text, &r)))
        }
        Command::PlanIslanding => {
            let r = client.plan_islanding(&PlanRequest { scenario, params }).await?;
            let text = report::islanding(&r);
            (text.clone(), g.out.as_ref().map(|d| write_files(d, &stem, &text, &r)))
        }
        Command::PlanStorage { profile } => {
            let profile = match profile {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Some(pcmg_core::planner::parse_profile(&text)?)
                }
                None => None,
            };
            let r = client.plan_storage(&StorageRequest { scenario, params, profile }).await?;
            let text = report::storage(&r);
            (text.clone(), g.out.as_ref().map(|d| write_files(d, &stem, &text, &r)))
        }
        Command::EvaluateMr { repeats } => {
            let r = client.evaluate_mr(&MrRequest { scenario, params, repeats }).await?;
            let text = report::mr(&r);
            (text.clone(), g.out.as_ref().map(|d| write_files(d, &stem, &text, &r)))
        }
        Command::RunDistributed { workers, spawn, top, verify } => {
            let mut workers: Vec<String> = workers.iter().flat_map(|w| parse_worker_list(w)).collect();
            for i in 0..spawn {
                let opts = WorkerOptions { name: format!("local{i}"), ..WorkerOptions::default() };
                workers.push(spawn_worker("127.0.0.1:0", opts).await?.0.to_string());
            }
            if workers.is_empty() {
                bail!("no workers: pass --workers, set {WORKERS_ENV} or use --spawn");
            }
            let req = DistributedRequest {
                scenario: scenario.clone(),
                seed: g.seed,
                samples: g.samples,
                workers,
                requirement: None,
                top_pct: top.map(|t| t / 100.0),
            };
            let r = client.distributed(&req).await?;
            let bytes = r.ls_bytes()?;
            let mut text = report::distributed(&r);
            if verify {
                let state = scenario.state()?;
                let ctx = GenerationJob::new(&scenario, &state).context(islanding_requirement(&state))?;
                let mut local = generate_ls(&ctx, g.samples, g.seed)?;
                if let Some(t) = req.top_pct {
                    local = local.label_top(t)?;
                }
                let same = canonical::encode(&local) == bytes;
                text.push_str(&format!("identical to single-process generation: {}\n", if same { "yes" } else { "NO" }));
                if !same {
                    print!("{text}");
                    bail!("distributed learning set differs from single-process generation");
                }
            }
            let summary = DistributedSummary {
                header: &r.header,
                requirement: &r.requirement,
                attempted: r.attempted,
                kept: r.kept,
                skipped: r.skipped,
                ls_sha256: &r.ls_sha256,
            };
            let written = g.out.as_ref().map(|d| {
                write_files(d, &stem, &text, &summary)?;
                std::fs::write(d.join(format!("{stem}.pcls")), &bytes)?;
                Ok(())
            });
            extra = report::deployment(&r);
            (text, written)
        }
        Command::Serve { .. } | Command::ServeWorker { .. } => unreachable!("handled above"),
    };
    print!("{text}{extra}");
    if let Some(result) = written {
        result?;
        eprintln!("wrote {stem}.* under {}", g.out.as_ref().expect("out dir").display());
    }
    Ok(())
}
