//! Thin async client for the listening-test service.

use infoloss::listening::wire::{
    CreateSession, ErrorBody, ResponseAccepted, SessionCreated, SubmitResponse, TrialView,
};
use infoloss::listening::SessionResults;
use reqwest::{Method, RequestBuilder, Response, StatusCode};
use serde::de::DeserializeOwned;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server replied {status}: {} ({})", body.message, body.code)]
    Api { status: StatusCode, body: ErrorBody },
}

impl ClientError {
    /// HTTP status of a refused request.
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Http(e) => e.status(),
        }
    }

    /// The server's error code, e.g. `conflict`.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.code),
            ClientError::Http(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

/// A created session and the token that authorizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionHandle {
    pub session_id: String,
    pub token: String,
    pub trial_count: usize,
}

impl From<&SessionCreated> for SessionHandle {
    fn from(c: &SessionCreated) -> Self {
        SessionHandle {
            session_id: c.session_id.clone(),
            token: c.token.clone(),
            trial_count: c.trial_count,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn request(
        &self,
        method: Method,
        path: &str,
        session: Option<&SessionHandle>,
    ) -> RequestBuilder {
        let rb = self.http.request(method, format!("{}{path}", self.base));
        match session {
            Some(s) => rb.bearer_auth(&s.token),
            None => rb,
        }
    }

    async fn checked(rb: RequestBuilder) -> Result<Response> {
        let resp = rb.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            code: "http".into(),
            message: text,
        });
        Err(ClientError::Api { status, body })
    }

    async fn json<T: DeserializeOwned>(rb: RequestBuilder) -> Result<T> {
        Ok(Self::checked(rb).await?.json().await?)
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionCreated> {
        Self::json(self.request(Method::POST, "/sessions", None).json(req)).await
    }

    pub async fn trial(&self, s: &SessionHandle, n: usize) -> Result<TrialView> {
        let path = format!("/sessions/{}/trials/{n}", s.session_id);
        Self::json(self.request(Method::GET, &path, Some(s))).await
    }

    /// WAV bytes of trial `n`.
    pub async fn audio(&self, s: &SessionHandle, n: usize) -> Result<Vec<u8>> {
        let path = format!("/sessions/{}/trials/{n}/audio", s.session_id);
        let resp = Self::checked(self.request(Method::GET, &path, Some(s))).await?;
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn respond(
        &self,
        s: &SessionHandle,
        n: usize,
        body: &SubmitResponse,
    ) -> Result<ResponseAccepted> {
        let path = format!("/sessions/{}/trials/{n}/response", s.session_id);
        Self::json(self.request(Method::POST, &path, Some(s)).json(body)).await
    }

    pub async fn results(&self, s: &SessionHandle) -> Result<SessionResults> {
        let path = format!("/sessions/{}/results", s.session_id);
        Self::json(self.request(Method::GET, &path, Some(s))).await
    }
}
