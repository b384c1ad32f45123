//! Thin async client for the pcmg service.

use pcmg_api::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Environment variable holding the default service URL.
pub const SERVER_ENV: &str = "PCMG_SERVER";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("service returned {status}: {error}")]
    Api { status: u16, error: ApiError },
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: &str) -> Self {
        Self {
            base: base.trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub async fn health(&self) -> Result<Health> {
        let resp = self.http.get(format!("{}{}", self.base, paths::HEALTH)).send().await?;
        decode(resp).await
    }

    pub async fn plan_hour(&self, req: &PlanRequest) -> Result<HourReport> {
        self.post(paths::PLAN_HOUR, req).await
    }

    pub async fn plan_islanding(&self, req: &PlanRequest) -> Result<IslandingReport> {
        self.post(paths::PLAN_ISLANDING, req).await
    }

    pub async fn plan_storage(&self, req: &StorageRequest) -> Result<StorageReport> {
        self.post(paths::PLAN_STORAGE, req).await
    }

    pub async fn evaluate_mr(&self, req: &MrRequest) -> Result<MrReport> {
        self.post(paths::EVALUATE_MR, req).await
    }

    pub async fn distributed(&self, req: &DistributedRequest) -> Result<DistributedReport> {
        self.post(paths::LS_DISTRIBUTED, req).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(body).send().await?;
        decode(resp).await
    }
}

async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp.json().await?);
    }
    let text = resp.text().await?;
    let error = serde_json::from_str::<ApiError>(&text).unwrap_or_else(|_| ApiError::new("http", text.clone()));
    Err(ClientError::Api {
        status: status.as_u16(),
        error,
    })
}
