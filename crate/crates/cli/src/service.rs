//! Local layout service: metadata, one-shot layouts and a coalescing
//! WebSocket stream.
//!
//! * `GET /meta` returns [`Meta`] as JSON.
//! * `POST /layout` takes a JSON [`LayoutRequest`] and answers with one
//!   binary [`LayoutFrame`].
//! * `GET /stream` upgrades to a WebSocket. The client sends JSON
//!   `LayoutRequest` text messages; the server answers with binary frames.
//!   While a layout is being computed, newer requests replace older pending
//!   ones, so only the most recent waiting request is computed next.
//!
//! Errors are JSON `{"seq": .., "error": {"class": .., "detail": ..}}`,
//! sent as a text message on the stream (which stays open) or as a 400
//! response body.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hyperproj::engines::HyperValue;
use hyperproj::inference::{InferenceOptions, PreparedInputs};
use hyperproj::model::NetworkModel;
use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::frame::{LayoutFrame, FRAME_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub engine: String,
    pub hyper_names: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub grid: Vec<Vec<f64>>,
    pub points: usize,
    pub features: usize,
    /// Distinct labels in ascending order; empty for unlabeled data.
    pub labels: Vec<i64>,
    pub frame_version: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HInput {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl HInput {
    pub fn value(&self) -> HyperValue {
        match self {
            HInput::Scalar(v) => HyperValue::scalar(*v),
            HInput::Vector(v) => HyperValue(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRequest {
    #[serde(default)]
    pub seq: u64,
    pub h: HInput,
    /// Attach per-point labels; defaults to on for one-shot queries and off
    /// on the stream.
    #[serde(default)]
    pub labels: Option<bool>,
    #[serde(default)]
    pub allow_extrapolation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub class: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    pub seq: Option<u64>,
    pub error: ErrorBody,
}

impl ErrorFrame {
    fn new(seq: Option<u64>, f: Failure) -> Self {
        Self {
            seq,
            error: ErrorBody {
                class: f.class.to_string(),
                detail: f.detail,
            },
        }
    }

    fn json(&self) -> String {
        serde_json::to_string(self).expect("plain struct")
    }
}

/// Immutable state shared by every session.
pub struct ServiceState {
    model: NetworkModel,
    prepared: PreparedInputs,
    labels: Option<Vec<i32>>,
    meta: Meta,
    batch_size: usize,
}

impl ServiceState {
    pub fn new(
        model: NetworkModel,
        rows: ArrayView2<f64>,
        labels: Option<&[i64]>,
        batch_size: usize,
    ) -> Result<Self, Failure> {
        let prepared = PreparedInputs::new(&model, rows)?;
        let labels32 = labels
            .map(|l| {
                l.iter()
                    .map(|&v| i32::try_from(v).map_err(|_| Failure::new("data", format!("label {v} does not fit in i32"))))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        let mut palette: Vec<i64> = labels.map(|l| l.to_vec()).unwrap_or_default();
        palette.sort_unstable();
        palette.dedup();
        let norm = &model.normalization;
        let meta = Meta {
            engine: model.provenance.engine.name().to_string(),
            hyper_names: norm.hyper_names.clone(),
            lo: norm.h_min.clone(),
            hi: norm.h_max.clone(),
            grid: model.provenance.grid.iter().map(|h| h.values().to_vec()).collect(),
            points: rows.nrows(),
            features: rows.ncols(),
            labels: palette,
            frame_version: FRAME_VERSION,
        };
        Ok(Self {
            model,
            prepared,
            labels: labels32,
            meta,
            batch_size,
        })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    /// Computes the frame for `req` on a session's input cache. The frame
    /// echoes the h it was computed for.
    pub fn layout(
        &self,
        cache: &mut PreparedInputs,
        req: &LayoutRequest,
        labels_by_default: bool,
    ) -> Result<LayoutFrame, Failure> {
        let h = req.h.value();
        let opts = InferenceOptions {
            batch_size: self.batch_size,
            denormalize: true,
            allow_extrapolation: req.allow_extrapolation,
        };
        let layout = cache.infer(&self.model, &h, &opts)?;
        let want_labels = req.labels.unwrap_or(labels_by_default);
        Ok(LayoutFrame {
            seq: req.seq,
            h: layout.h.values().to_vec(),
            extrapolated: layout.extrapolated,
            coords: layout.coords.iter().copied().collect(),
            labels: if want_labels { self.labels.clone() } else { None },
        })
    }

    pub fn session_cache(&self) -> PreparedInputs {
        self.prepared.clone()
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/layout", post(layout))
        .route("/stream", get(stream))
        .with_state(state)
}

async fn meta(State(state): State<Arc<ServiceState>>) -> Json<Meta> {
    Json(state.meta.clone())
}

fn error_response(frame: ErrorFrame) -> Response {
    (
        StatusCode::BAD_REQUEST,
        [(header::CONTENT_TYPE, "application/json")],
        frame.json(),
    )
        .into_response()
}

fn parse_request(bytes: &[u8]) -> Result<LayoutRequest, Failure> {
    serde_json::from_slice(bytes).map_err(|e| Failure::new("hyperparameter", format!("malformed request: {e}")))
}

async fn layout(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(f) => return error_response(ErrorFrame::new(None, f)),
    };
    let seq = req.seq;
    let result = tokio::task::spawn_blocking(move || {
        let mut cache = state.session_cache();
        state.layout(&mut cache, &req, true)
    })
    .await
    .unwrap_or_else(|e| Err(Failure::new("internal", e.to_string())));
    match result {
        Ok(frame) => ([(header::CONTENT_TYPE, "application/octet-stream")], frame.encode()).into_response(),
        Err(f) => error_response(ErrorFrame::new(Some(seq), f)),
    }
}

async fn stream(ws: WebSocketUpgrade, State(state): State<Arc<ServiceState>>) -> Response {
    ws.on_upgrade(move |socket| session(socket, state))
}

type Job = tokio::task::JoinHandle<(PreparedInputs, Result<Vec<u8>, String>)>;

fn start_job(state: &Arc<ServiceState>, mut cache: PreparedInputs, req: LayoutRequest) -> Job {
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || {
        let out = state
            .layout(&mut cache, &req, false)
            .map(|f| f.encode())
            .map_err(|f| ErrorFrame::new(Some(req.seq), f).json());
        (cache, out)
    })
}

/// One client: at most one layout in flight and at most one request
/// waiting; a newer request overwrites the waiting one.
async fn session(mut socket: WebSocket, state: Arc<ServiceState>) {
    let mut cache = Some(state.session_cache());
    let mut waiting: Option<LayoutRequest> = None;
    let mut running: Option<Job> = None;
    loop {
        if running.is_none() {
            if let Some(req) = waiting.take() {
                let c = cache.take().expect("cache is idle when nothing runs");
                running = Some(start_job(&state, c, req));
            }
        }
        tokio::select! {
            msg = socket.recv() => match msg {
                Some(Ok(Message::Text(text))) => match parse_request(text.as_bytes()) {
                    Ok(req) => {
                        if let Some(stale) = waiting.replace(req) {
                            log::debug!("dropping stale request {}", stale.seq);
                        }
                    }
                    Err(f) => {
                        let frame = ErrorFrame::new(None, f).json();
                        if socket.send(Message::Text(frame.into())).await.is_err() {
                            break;
                        }
                    }
                },
                Some(Ok(Message::Binary(_))) => {
                    let f = Failure::new("hyperparameter", "requests must be JSON text messages");
                    if socket.send(Message::Text(ErrorFrame::new(None, f).json().into())).await.is_err() {
                        break;
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
            done = async { running.as_mut().expect("guarded").await }, if running.is_some() => {
                running = None;
                let Ok((c, out)) = done else { break };
                cache = Some(c);
                let msg = match out {
                    Ok(bytes) => Message::Binary(bytes.into()),
                    Err(json) => Message::Text(json.into()),
                };
                if socket.send(msg).await.is_err() {
                    break;
                }
            }
        }
    }
}

/// Serves until interrupted.
pub async fn serve(state: ServiceState, addr: SocketAddr) -> Result<(), Failure> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Failure::new("io", format!("cannot bind {addr}: {e}")))?;
    let local = listener
        .local_addr()
        .map_err(|e| Failure::new("io", e.to_string()))?;
    println!("listening on http://{local}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::new("io", e.to_string()))
}
