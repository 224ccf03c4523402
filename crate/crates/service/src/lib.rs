//! HTTP service for forced-choice closed-set listening tests.
//!
//! Every session is a JSON-lines event log under the data directory. A
//! response is synced to disk before it is acknowledged, and logs are
//! replayed on startup. Stimuli are mixed once per session from its plan
//! seed; clients never see an SNR until the session is complete.

mod log;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use infoloss::corpus::NormalizedCorpus;
use infoloss::listening::wire::{
    CreateSession, ErrorBody, ResponseAccepted, SessionCreated, Slot, SubmitResponse, TrialView,
    PROTOCOL_VERSION,
};
use infoloss::listening::{
    render_session_audio, Phase, ProtocolError, RecordedResponse, SessionConfig, SessionPlan,
    SessionRecord,
};
use serde::de::DeserializeOwned;
use tokio::sync::{Mutex, RwLock};

pub use log::{Event, EventLog};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] infoloss::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub session: SessionConfig,
}

struct Session {
    record: SessionRecord,
    token: String,
    /// WAV bytes per trial; absent when the corpus is not loaded.
    audio: Option<Vec<Vec<u8>>>,
    log: EventLog,
}

pub struct Service {
    config: ServiceConfig,
    corpus: Option<Arc<NormalizedCorpus>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl Service {
    /// Opens the data directory and replays every session log in it.
    pub fn open(
        config: ServiceConfig,
        corpus: Option<NormalizedCorpus>,
    ) -> Result<Self, ServiceError> {
        config.session.validate()?;
        std::fs::create_dir_all(&config.data_dir)?;
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&config.data_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut sessions = HashMap::new();
        for p in paths {
            let (state, log) = EventLog::replay(&p)?;
            let audio = match &corpus {
                Some(c) => Some(render_session_audio(
                    &state.record.plan,
                    c,
                    &config.session,
                )?),
                None => None,
            };
            let id = state.record.session_id.clone();
            tracing::info!(session = %id, answered = state.record.responses.len(), "replayed session");
            sessions.insert(
                id,
                Arc::new(Mutex::new(Session {
                    record: state.record,
                    token: state.token,
                    audio,
                    log,
                })),
            );
        }
        Ok(Service {
            config,
            corpus: corpus.map(Arc::new),
            sessions: RwLock::new(sessions),
        })
    }

    pub async fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().await.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Operator view of a session, including its hidden plan.
    pub async fn record(&self, session_id: &str) -> Option<SessionRecord> {
        let s = self.sessions.read().await.get(session_id).cloned()?;
        let r = s.lock().await.record.clone();
        Some(r)
    }

    async fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("no session {id}"),
            )
        })
    }

    async fn create(&self, req: CreateSession) -> Result<SessionCreated, ApiError> {
        let phase: Phase = req.phase.parse().map_err(ApiError::validation)?;
        if req.subject_id.trim().is_empty() {
            return Err(ApiError::validation("subject_id must not be empty"));
        }
        let corpus = self.corpus.as_ref().ok_or_else(|| {
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "unavailable",
                "no corpus loaded",
            )
        })?;
        let c = &corpus.corpus;
        let seed = req
            .seed
            .unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0);
        let plan = SessionPlan::generate(
            phase,
            &self.config.session,
            c.word_count(),
            c.realization_count(),
            seed,
        )
        .map_err(ApiError::internal)?;
        let audio = render_session_audio(&plan, corpus, &self.config.session)
            .map_err(ApiError::internal)?;
        let record = SessionRecord {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            subject_id: req.subject_id,
            gamma: c.word_count(),
            labels: c.labels().to_vec(),
            slots: self.config.session.slots(),
            plan,
            responses: Vec::new(),
        };
        let token = uuid::Uuid::new_v4().simple().to_string();
        let created = Event::Created {
            record: record.clone(),
            token: token.clone(),
        };
        let log = EventLog::create(&self.config.data_dir, &created).map_err(ApiError::internal)?;
        let reply = SessionCreated {
            session_id: record.session_id.clone(),
            token: token.clone(),
            phase,
            trial_count: record.trial_count(),
            protocol: PROTOCOL_VERSION,
        };
        tracing::info!(session = %reply.session_id, phase = phase.as_str(), "created session");
        self.sessions.write().await.insert(
            record.session_id.clone(),
            Arc::new(Mutex::new(Session {
                record,
                token,
                audio: Some(audio),
                log,
            })),
        );
        Ok(reply)
    }
}

/// An error reply with a JSON `{code, message}` body.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        }
    }

    fn validation(e: impl ToString) -> Self {
        Self::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation",
            e.to_string(),
        )
    }

    fn internal(e: impl ToString) -> Self {
        let message = e.to_string();
        tracing::error!(%message, "request failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<ProtocolError> for ApiError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Validation(m) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", m)
            }
            ProtocolError::Conflict(m) => Self::new(StatusCode::CONFLICT, "conflict", m),
            ProtocolError::Gone => Self::new(StatusCode::GONE, "gone", "session is complete"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::validation(format!("malformed request body: {e}")))
}

fn parse_trial(n: &str) -> Result<usize, ApiError> {
    n.parse()
        .map_err(|_| ApiError::validation(format!("trial number {n:?} is not a positive integer")))
}

fn authorize(headers: &HeaderMap, session: &Session) -> Result<(), ApiError> {
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    if given == Some(session.token.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong session token",
        ))
    }
}

type Api = Arc<Service>;

async fn create_session(
    State(svc): State<Api>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSession = parse_body(&body)?;
    Ok((StatusCode::CREATED, Json(svc.create(req).await?)))
}

async fn get_trial(
    State(svc): State<Api>,
    Path((id, n)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Json<TrialView>, ApiError> {
    let n = parse_trial(&n)?;
    let s = svc.session(&id).await?;
    let s = s.lock().await;
    authorize(&headers, &s)?;
    s.record.check_fetch(n)?;
    let r = &s.record;
    let slots = (0..r.slots)
        .map(|i| Slot {
            category: if r.slots == 1 {
                "word".into()
            } else {
                format!("word {}", i + 1)
            },
            candidates: r.labels.clone(),
        })
        .collect();
    Ok(Json(TrialView {
        trial: n,
        trial_count: r.trial_count(),
        phase: r.plan.phase,
        slots,
        audio_url: format!("/sessions/{id}/trials/{n}/audio"),
        replay_allowed: r.plan.phase == Phase::Training,
    }))
}

async fn get_audio(
    State(svc): State<Api>,
    Path((id, n)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ApiError> {
    let n = parse_trial(&n)?;
    let s = svc.session(&id).await?;
    let s = s.lock().await;
    authorize(&headers, &s)?;
    s.record.check_fetch(n)?;
    let audio = s.audio.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "unavailable",
            "no corpus loaded",
        )
    })?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], audio[n - 1].clone()))
}

async fn submit_response(
    State(svc): State<Api>,
    Path((id, n)): Path<(String, String)>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<ResponseAccepted>, ApiError> {
    let n = parse_trial(&n)?;
    let req: SubmitResponse = parse_body(&body)?;
    let s = svc.session(&id).await?;
    let mut s = s.lock().await;
    authorize(&headers, &s)?;
    let response = RecordedResponse {
        choices: req.choices,
        response_ms: req.response_ms,
    };
    let a = s.record.check_response(n, &response)?;
    if !a.duplicate {
        let event = Event::Response {
            trial: n,
            response: response.clone(),
        };
        s.log.append(&event).map_err(ApiError::internal)?;
        s.record.respond(n, response)?;
    }
    Ok(Json(ResponseAccepted {
        accepted: true,
        next: a.next,
        complete: s.record.is_complete(),
    }))
}

async fn get_results(
    State(svc): State<Api>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ApiError> {
    let s = svc.session(&id).await?;
    let s = s.lock().await;
    authorize(&headers, &s)?;
    Ok(Json(s.record.results()?))
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/trials/{n}", get(get_trial))
        .route("/sessions/{id}/trials/{n}/audio", get(get_audio))
        .route("/sessions/{id}/trials/{n}/response", post(submit_response))
        .route("/sessions/{id}/results", get(get_results))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(service)
}

/// Serves until the future `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<Service>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(shutdown)
        .await
}
