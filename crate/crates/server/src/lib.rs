//! The pcmg HTTP service. Compute-bound operations run on the blocking
//! pool; distributed generation drives remote workers from the runtime.

use std::net::SocketAddr;

use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pcmg_api::*;
use pcmg_core::balancer::{evaluate_mr, islanding_requirement, plan_hour, plan_islanding};
use pcmg_core::lsgen::canonical;
use pcmg_core::planner::{appraise, scenario_events, scenario_options};
use pcmg_core::scenario::hex;
use pcmg_core::{Error as CoreError, Scenario};
use pcmg_distgen::{run_coordinator, CoordinatorOptions, GenerationJob};
use sha2::{Digest, Sha256};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub struct Failure(StatusCode, ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        use CoreError::*;
        let (status, kind) = match &e {
            Disconnected(_) | NotRadial(_) | ZeroImpedance(_) | UnknownBus(_) | DispatchMismatch(_)
            | InvalidParameter(_) | Validation(_) | Parse(_) | Format(_) | EmptyCosts => {
                (StatusCode::BAD_REQUEST, "invalid")
            }
            NoFlexibility | Shortfall { .. } | SkipBudget { .. } | EmptyLearningSet | EmptyTestSet
            | MissingAttribute(_) => (StatusCode::UNPROCESSABLE_ENTITY, "infeasible"),
            Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Failure(status, ApiError::new(kind, e.to_string()))
    }
}

impl From<pcmg_distgen::Error> for Failure {
    fn from(e: pcmg_distgen::Error) -> Self {
        match e {
            pcmg_distgen::Error::Core(c) => c.into(),
            pcmg_distgen::Error::Job(m) => Failure(StatusCode::BAD_REQUEST, ApiError::new("invalid", m)),
            pcmg_distgen::Error::NoWorkers => Failure(StatusCode::BAD_REQUEST, ApiError::new("invalid", e.to_string())),
            other => Failure(StatusCode::BAD_GATEWAY, ApiError::new("workers", other.to_string())),
        }
    }
}

impl From<JsonRejection> for Failure {
    fn from(e: JsonRejection) -> Self {
        Failure(e.status(), ApiError::new("request", e.body_text()))
    }
}

type Reply<T> = Result<Json<T>, Failure>;

/// Runs `f` on the blocking pool.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, CoreError> + Send + 'static) -> Result<T, Failure> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| Failure(StatusCode::INTERNAL_SERVER_ERROR, ApiError::new("internal", e.to_string())))?
        .map_err(Failure::from)
}

fn checked(sc: &Scenario) -> Result<(), Failure> {
    sc.validate().map_err(Failure::from)
}

pub fn router() -> Router {
    Router::new()
        .route(paths::HEALTH, get(health))
        .route(paths::PLAN_HOUR, post(hour))
        .route(paths::PLAN_ISLANDING, post(islanding))
        .route(paths::PLAN_STORAGE, post(storage))
        .route(paths::EVALUATE_MR, post(mr))
        .route(paths::LS_DISTRIBUTED, post(distributed))
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn hour(body: Result<Json<PlanRequest>, JsonRejection>) -> Reply<HourReport> {
    let Json(req) = body?;
    checked(&req.scenario)?;
    let report = blocking(move || {
        let sc = req.scenario;
        let p = req.params;
        let (deficit, excess) = plan_hour(&sc, &sc.state()?, &p.config())?;
        Ok(HourReport {
            header: ReportHeader::new(&sc, p.seed, p.samples, &p.levels),
            deficit,
            excess,
        })
    })
    .await?;
    Ok(Json(report))
}

async fn islanding(body: Result<Json<PlanRequest>, JsonRejection>) -> Reply<IslandingReport> {
    let Json(req) = body?;
    checked(&req.scenario)?;
    let report = blocking(move || {
        let sc = req.scenario;
        let p = req.params;
        let plan = plan_islanding(&sc, &sc.state()?, &p.config())?;
        Ok(IslandingReport {
            header: ReportHeader::new(&sc, p.seed, p.samples, &p.levels),
            plan,
        })
    })
    .await?;
    Ok(Json(report))
}

async fn storage(body: Result<Json<StorageRequest>, JsonRejection>) -> Reply<StorageReport> {
    let Json(req) = body?;
    checked(&req.scenario)?;
    let report = blocking(move || {
        let sc = req.scenario;
        let p = req.params;
        if sc.planning.is_none() {
            return Err(CoreError::InvalidParameter("scenario has no planning section".into()));
        }
        let events = scenario_events(&sc, req.profile.as_deref(), p.seed)?;
        let table = appraise(&sc, &scenario_options(&sc), &events, &p.config())?;
        Ok(StorageReport {
            header: ReportHeader::new(&sc, p.seed, p.samples, &p.levels),
            events: EventSummary::from(&events),
            table,
        })
    })
    .await?;
    Ok(Json(report))
}

async fn mr(body: Result<Json<MrRequest>, JsonRejection>) -> Reply<MrReport> {
    let Json(req) = body?;
    checked(&req.scenario)?;
    let report = blocking(move || {
        let sc = req.scenario;
        let p = req.params;
        let (levels, plans) = evaluate_mr(&sc, &sc.state()?, &p.config(), req.repeats)?;
        Ok(MrReport {
            header: ReportHeader::new(&sc, p.seed, p.samples, &p.levels),
            repeats: req.repeats,
            levels,
            plans,
        })
    })
    .await?;
    Ok(Json(report))
}

async fn distributed(body: Result<Json<DistributedRequest>, JsonRejection>) -> Reply<DistributedReport> {
    let Json(req) = body?;
    checked(&req.scenario)?;
    let sc = &req.scenario;
    let state = sc.state()?;
    let requirement = req.requirement.unwrap_or_else(|| islanding_requirement(&state));
    let job = GenerationJob::new(sc, &state);
    let run = run_coordinator(&req.workers, &job, requirement, req.samples, req.seed, CoordinatorOptions::default()).await?;
    let ls = match req.top_pct {
        Some(top) => run.ls.label_top(top)?,
        None => run.ls,
    };
    let bytes = canonical::encode(&ls);
    Ok(Json(DistributedReport {
        header: ReportHeader::new(sc, req.seed, req.samples, &[]),
        requirement,
        workers: req.workers,
        attempted: ls.attempted,
        kept: ls.records.len() as u32,
        skipped: ls.skipped,
        ls_sha256: hex(&Sha256::digest(&bytes)),
        failovers: run.failovers,
        timings: run.timings,
        wall_seconds: run.wall_seconds,
        ls: DistributedReport::encode_ls(&ls),
    }))
}

/// Serves the API on `listener` until the task is dropped.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        log::info!("pcmg service listening on {addr}");
    }
    axum::serve(listener, router()).await
}

/// Binds `addr` and serves in a background task.
pub async fn spawn(addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, tokio::spawn(serve(listener))))
}
