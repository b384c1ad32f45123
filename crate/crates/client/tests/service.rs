use pcmg_api::*;
use pcmg_client::{Client, ClientError};
use pcmg_core::Scenario;

async fn client() -> Client {
    let (addr, _) = pcmg_server::spawn("127.0.0.1:0").await.unwrap();
    Client::new(&format!("http://{addr}/"))
}

#[tokio::test]
async fn health_and_plan_round_trip() {
    let c = client().await;
    assert_eq!(c.health().await.unwrap().status, "ok");
    let sc = Scenario::bundled();
    let req = PlanRequest {
        scenario: sc.clone(),
        params: RunParams { seed: 1, samples: 200, ..RunParams::default() },
    };
    let a = c.plan_islanding(&req).await.unwrap();
    let b = c.plan_islanding(&req).await.unwrap();
    assert_eq!(a, b);
    assert_eq!(a.header.digest, sc.digest_hex());
}

#[tokio::test]
async fn service_errors_are_typed() {
    let c = client().await;
    let req = PlanRequest {
        scenario: Scenario::bundled(),
        params: RunParams { levels: vec![1.5], ..RunParams::default() },
    };
    match c.plan_hour(&req).await {
        Err(ClientError::Api { status, error }) => {
            assert_eq!(status, 400);
            assert_eq!(error.kind, "invalid");
            assert!(error.message.contains("1.5"));
        }
        other => panic!("expected an api error, got {other:?}"),
    }
}

#[tokio::test]
async fn unreachable_service_is_an_http_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let c = Client::new(&format!("http://{addr}"));
    assert!(matches!(c.health().await, Err(ClientError::Http(_))));
}
