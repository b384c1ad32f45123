use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use pcmg_api::*;
use pcmg_core::balancer::islanding_requirement;
use pcmg_core::lsgen::{canonical, generate_ls};
use pcmg_core::Scenario;
use pcmg_distgen::{spawn_worker, GenerationJob, WorkerOptions};
use serde_json::Value;
use tower::ServiceExt;

async fn call(path: &str, body: Option<String>) -> (StatusCode, Value) {
    let req = match body {
        Some(b) => Request::post(path).header("content-type", "application/json").body(Body::from(b)),
        None => Request::get(path).body(Body::empty()),
    }
    .unwrap();
    let resp = pcmg_server::router().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn params(samples: u32) -> RunParams {
    RunParams {
        seed: 3,
        samples,
        ..RunParams::default()
    }
}

fn plan_body(sc: Scenario, samples: u32) -> String {
    serde_json::to_string(&PlanRequest { scenario: sc, params: params(samples) }).unwrap()
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, v) = call(paths::HEALTH, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn islanding_plan_carries_the_scenario_digest() {
    let sc = Scenario::bundled();
    let (status, v) = call(paths::PLAN_ISLANDING, Some(plan_body(sc.clone(), 300))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let report: IslandingReport = serde_json::from_value(v).unwrap();
    assert_eq!(report.header.digest, sc.digest_hex());
    assert_eq!(report.header.seed, 3);
    assert_eq!(report.plan.levels.len(), 6);
    assert_eq!(report.plan.attempted, 300);
}

#[tokio::test]
async fn hour_plan_has_both_directions() {
    let (status, v) = call(paths::PLAN_HOUR, Some(plan_body(Scenario::bundled(), 200))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let report: HourReport = serde_json::from_value(v).unwrap();
    assert_eq!(report.deficit.direction, pcmg_core::lsgen::Direction::Deficit);
    assert_eq!(report.excess.direction, pcmg_core::lsgen::Direction::Excess);
}

#[tokio::test]
async fn evaluate_mr_summarises_every_level() {
    let sc = Scenario::bundled();
    let body = serde_json::to_string(&MrRequest { scenario: sc, params: params(200), repeats: 2 }).unwrap();
    let (status, v) = call(paths::EVALUATE_MR, Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let report: MrReport = serde_json::from_value(v).unwrap();
    assert_eq!(report.plans.len(), 2);
    assert_eq!(report.levels.len(), 6);
    assert!(report.levels.windows(2).all(|w| w[0].top_pct > w[1].top_pct));
}

#[tokio::test]
async fn storage_table_covers_every_option() {
    let sc = Scenario::bundled();
    let options = pcmg_core::planner::scenario_options(&sc).len();
    let body = serde_json::to_string(&StorageRequest { scenario: sc, params: params(100), profile: None }).unwrap();
    let (status, v) = call(paths::PLAN_STORAGE, Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let report: StorageReport = serde_json::from_value(v).unwrap();
    assert_eq!(report.table.rows.len(), options);
    assert_eq!(report.events.combined, report.table.combined_events);
}

#[tokio::test]
async fn bad_parameters_are_rejected() {
    let (status, v) = call(paths::PLAN_ISLANDING, Some(plan_body(Scenario::bundled(), 0))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["kind"], "invalid");

    let mut sc = Scenario::bundled();
    sc.meta.nominal_total_load_kw = -1.0;
    let (status, v) = call(paths::PLAN_HOUR, Some(plan_body(sc, 10))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("nominal total load"));

    let mut sc = Scenario::bundled();
    sc.planning = None;
    let body = serde_json::to_string(&StorageRequest { scenario: sc, params: params(10), profile: None }).unwrap();
    assert_eq!(call(paths::PLAN_STORAGE, Some(body)).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn malformed_bodies_get_an_error_body() {
    let (status, v) = call(paths::PLAN_HOUR, Some("{\"scenario\": 4}".into())).await;
    assert!(status.is_client_error());
    assert_eq!(v["kind"], "request");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn distributed_set_matches_local_generation() {
    let sc = Scenario::bundled();
    let mut workers = Vec::new();
    for i in 0..2 {
        let opts = WorkerOptions { name: format!("w{i}"), ..Default::default() };
        workers.push(spawn_worker("127.0.0.1:0", opts).await.unwrap().0.to_string());
    }
    let body = serde_json::to_string(&DistributedRequest {
        scenario: sc.clone(),
        seed: 11,
        samples: 120,
        workers,
        requirement: None,
        top_pct: None,
    })
    .unwrap();
    let (status, v) = call(paths::LS_DISTRIBUTED, Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let report: DistributedReport = serde_json::from_value(v).unwrap();

    let state = sc.state().unwrap();
    let ctx = GenerationJob::new(&sc, &state).context(islanding_requirement(&state)).unwrap();
    let local = canonical::encode(&generate_ls(&ctx, 120, 11).unwrap());
    assert_eq!(report.ls_bytes().unwrap(), local);
    assert_eq!(report.kept + report.skipped, 120);

    let none = DistributedRequest {
        scenario: sc,
        seed: 1,
        samples: 10,
        workers: vec![],
        requirement: None,
        top_pct: None,
    };
    let (status, _) = call(paths::LS_DISTRIBUTED, Some(serde_json::to_string(&none).unwrap())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
