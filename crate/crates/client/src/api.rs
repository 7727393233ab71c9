use std::collections::BTreeSet;

use mirrorboard_core::gaze::Metrics;
use mirrorboard_core::relay::RelayStats;
use mirrorboard_core::session::{AvatarPose, BoardPlane, SessionConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickReport {
    pub frame_no: u64,
    pub deliveries: usize,
}

/// Thin wrapper over the relay's `/api` routes.
#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Http(e.to_string())
    }
}

async fn parse<T: DeserializeOwned>(r: reqwest::Response) -> Result<T, ClientError> {
    let status = r.status();
    if !status.is_success() {
        let body = r.text().await.unwrap_or_default();
        return Err(ClientError::Http(format!("{status}: {body}")));
    }
    Ok(r.json().await?)
}

impl ApiClient {
    /// `base` like `http://127.0.0.1:9091`.
    pub fn new(base: impl Into<String>) -> Self {
        ApiClient {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    pub async fn health(&self) -> Result<bool, ClientError> {
        let v: serde_json::Value = parse(self.http.get(self.url("/api/health")).send().await?).await?;
        Ok(v["status"] == "ok")
    }

    pub async fn stats(&self) -> Result<RelayStats, ClientError> {
        parse(self.http.get(self.url("/api/stats")).send().await?).await
    }

    pub async fn tick(&self) -> Result<TickReport, ClientError> {
        parse(self.http.post(self.url("/api/tick")).send().await?).await
    }

    pub async fn mirror(&self, pose: &AvatarPose, board: &BoardPlane) -> Result<AvatarPose, ClientError> {
        let body = json!({"pose": pose, "board": board});
        parse(self.http.post(self.url("/api/mirror")).json(&body).send().await?).await
    }

    pub async fn visible(&self, session: &SessionConfig, viewer: &str) -> Result<BTreeSet<String>, ClientError> {
        let body = json!({"session": session, "viewer": viewer});
        parse(self.http.post(self.url("/api/visible")).json(&body).send().await?).await
    }

    /// Recomputes metrics from a gaze log's text.
    pub async fn analyze(
        &self,
        log: String,
        cone_deg: Option<f64>,
        min_contact_ms: Option<u64>,
    ) -> Result<Metrics, ClientError> {
        let mut q: Vec<(&str, String)> = Vec::new();
        if let Some(c) = cone_deg {
            q.push(("cone", c.to_string()));
        }
        if let Some(m) = min_contact_ms {
            q.push(("min_contact", m.to_string()));
        }
        parse(
            self.http
                .post(self.url("/api/analyze"))
                .query(&q)
                .body(log)
                .send()
                .await?,
        )
        .await
    }
}
