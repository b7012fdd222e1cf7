//! HTTP/JSON front end of [`SceneService`].
//!
//! Every error is a JSON body `{code, message}`: 404 for unknown sessions,
//! datasets, labels or routes, 400 for malformed or out-of-range input.

use std::collections::HashMap;
use std::io::Write;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use dtb_core::scene::{ColorRangeMode, StateUpdate};
use dtb_core::{Axis, Error, SceneService, SlicePlane};

use crate::{parse_scope, CliError, ServeArgs};

type Shared = Arc<SceneService>;
type Params = HashMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError { status: 400, code: "bad_request".into(), message: message.into() }
    }

    pub fn not_found(message: impl Into<String>) -> ApiError {
        ApiError { status: 404, code: "not_found".into(), message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotFound(_) => ApiError::not_found(e.to_string()),
            Error::Bounds { .. } => ApiError { status: 400, code: "out_of_range".into(), message: e.to_string() },
            Error::Io { .. } | Error::Json(_) => {
                ApiError { status: 500, code: "internal".into(), message: e.to_string() }
            }
            _ => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn query(q: Result<Query<Params>, QueryRejection>) -> Result<Params, ApiError> {
    Ok(q?.0)
}

fn param<T: std::str::FromStr>(p: &Params, key: &str) -> Result<Option<T>, ApiError> {
    match p.get(key).map(|s| s.trim()).filter(|s| !s.is_empty()) {
        None => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| ApiError::bad_request(format!("invalid {key}={s:?}"))),
    }
}

fn required<T: std::str::FromStr>(p: &Params, key: &str) -> Result<T, ApiError> {
    param(p, key)?.ok_or_else(|| ApiError::bad_request(format!("missing query parameter {key:?}")))
}

fn parse_bool(p: &Params, key: &str) -> Result<Option<bool>, ApiError> {
    match p.get(key).map(|s| s.trim().to_ascii_lowercase()) {
        None => Ok(None),
        Some(s) => match s.as_str() {
            "1" | "true" | "yes" | "on" => Ok(Some(true)),
            "0" | "false" | "no" | "off" => Ok(Some(false)),
            _ => Err(ApiError::bad_request(format!("invalid {key}={s:?}"))),
        },
    }
}

/// Empty bodies decode as `T::default()`.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, Error> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => Ok(Json(r?)),
        Err(e) => Err(ApiError { status: 500, code: "internal".into(), message: e.to_string() }),
    }
}

#[derive(Debug, Default, Deserialize)]
struct OpenSession {
    dataset_id: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct Select {
    label: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
struct SliceBody {
    axis: Option<Axis>,
    coord: Option<f64>,
    thickness: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Neighbor {
    label: u32,
    name: String,
    weight: f64,
}

async fn datasets(State(svc): State<Shared>) -> Json<Vec<dtb_core::scene::DatasetInfo>> {
    Json(svc.datasets())
}

async fn open_session(State(svc): State<Shared>, bytes: Bytes) -> Result<(StatusCode, Json<dtb_core::SessionState>), ApiError> {
    let req: OpenSession = body(&bytes)?;
    let id = match req.dataset_id {
        Some(id) => id,
        None => svc.dataset_or_default(None)?.dataset.name.clone(),
    };
    Ok((StatusCode::CREATED, Json(svc.open_session(&id)?)))
}

async fn get_session(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<dtb_core::SessionState> {
    Ok(Json(svc.session(&id)?))
}

async fn update_state(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<dtb_core::SessionState> {
    let u: StateUpdate = body(&bytes)?;
    Ok(Json(svc.update(&id, &u)?))
}

fn update_from_query(p: &Params) -> Result<StateUpdate, ApiError> {
    let color_range_mode = match p.get("range").map(|s| s.trim()) {
        None | Some("") => None,
        Some(s) => Some(
            serde_json::from_value::<ColorRangeMode>(serde_json::Value::String(s.replace('-', "_")))
                .map_err(|_| ApiError::bad_request(format!("invalid range={s:?}; expected shared or per_set")))?,
        ),
    };
    Ok(StateUpdate {
        time_index: param(p, "t")?,
        threshold_tau: param(p, "tau")?,
        compare_mode: parse_bool(p, "compare")?,
        color_range_mode,
    })
}

async fn snapshot(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    q: Result<Query<Params>, QueryRejection>,
) -> ApiResult<dtb_core::SceneSnapshot> {
    let u = update_from_query(&query(q)?)?;
    if u != StateUpdate::default() {
        svc.update(&id, &u)?;
    }
    blocking(move || svc.snapshot(&id)).await
}

async fn select(State(svc): State<Shared>, Path(id): Path<String>, bytes: Bytes) -> ApiResult<dtb_core::SessionState> {
    let req: Select = body(&bytes)?;
    let label = req.label.ok_or_else(|| ApiError::bad_request("body must contain a label"))?;
    Ok(Json(svc.select_region(&id, label)?))
}

async fn reset(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<dtb_core::SessionState> {
    Ok(Json(svc.reset_navigation(&id)?))
}

async fn navigate(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    q: Result<Query<Params>, QueryRejection>,
) -> ApiResult<Vec<Neighbor>> {
    let from: u32 = required(&query(q)?, "from")?;
    let ranked = svc.navigate_next(&id, from)?;
    let state = svc.session(&id)?;
    let atlas = &svc.dataset(&state.dataset_id)?.dataset.atlas;
    Ok(Json(
        ranked
            .into_iter()
            .map(|(label, weight)| Neighbor {
                label,
                name: atlas.region(label).map(|r| r.name.clone()).unwrap_or_default(),
                weight,
            })
            .collect(),
    ))
}

async fn set_slice(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult<dtb_core::SessionState> {
    let req: SliceBody = body(&bytes)?;
    let plane = match (req.axis, req.coord) {
        (None, None) => None,
        (Some(axis), Some(coord)) => {
            let state = svc.session(&id)?;
            let atlas = &svc.dataset(&state.dataset_id)?.dataset.atlas;
            Some(match req.thickness {
                Some(th) => SlicePlane::new(axis, coord, th)?,
                None => SlicePlane::for_atlas(atlas, axis, coord)?,
            })
        }
        _ => return Err(ApiError::bad_request("slice needs both axis and coord, or neither to clear")),
    };
    Ok(Json(svc.set_slice(&id, plane)?))
}

async fn slice(
    State(svc): State<Shared>,
    q: Result<Query<Params>, QueryRejection>,
) -> ApiResult<dtb_core::SliceRaster> {
    let p = query(q)?;
    let axis: Axis = required(&p, "axis")?;
    let coord: f64 = required(&p, "coord")?;
    let t: usize = param(&p, "t")?.unwrap_or(0);
    let thickness: Option<f64> = param(&p, "thickness")?;
    let dataset = p.get("dataset").cloned();
    blocking(move || {
        let ds = svc.dataset_or_default(dataset.as_deref())?;
        let plane = match thickness {
            Some(th) => SlicePlane::new(axis, coord, th)?,
            None => SlicePlane::for_atlas(&ds.dataset.atlas, axis, coord)?,
        };
        svc.slice(dataset.as_deref(), &plane, t)
    })
    .await
}

async fn compare(
    State(svc): State<Shared>,
    q: Result<Query<Params>, QueryRejection>,
) -> ApiResult<dtb_core::ComparisonReport> {
    let p = query(q)?;
    let scope = parse_scope(p.get("scope").map(String::as_str).unwrap_or("all")).map_err(ApiError::bad_request)?;
    let dataset = p.get("dataset").cloned();
    blocking(move || svc.compare(dataset.as_deref(), &scope)).await
}

async fn bundles(State(svc): State<Shared>, q: Result<Query<Params>, QueryRejection>) -> Result<Response, ApiError> {
    let p = query(q)?;
    match svc.bundles(p.get("dataset").map(String::as_str))? {
        Some(doc) => Ok(Json(doc).into_response()),
        None => Err(ApiError::not_found("no bundle artifact attached to this dataset")),
    }
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

pub fn router(svc: Arc<SceneService>) -> Router {
    Router::new()
        .route("/datasets", get(datasets))
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/state", post(update_state))
        .route("/sessions/{id}/snapshot", get(snapshot))
        .route("/sessions/{id}/select", post(select))
        .route("/sessions/{id}/reset", post(reset))
        .route("/sessions/{id}/navigate", get(navigate))
        .route("/sessions/{id}/slice", post(set_slice))
        .route("/slice", get(slice))
        .route("/compare", get(compare))
        .route("/bundles", get(bundles))
        .fallback(fallback)
        .with_state(svc)
}

/// Loads the stores and serves until Ctrl-C.
pub(crate) fn run_blocking(args: &ServeArgs, threads: usize, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|_| CliError::Validation(format!("invalid listen address {}:{}", args.host, args.port)))?;
    let datasets = crate::load_stores(&args.store)?;
    let svc = Arc::new(SceneService::new(datasets)?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(threads)
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(format!("runtime: {e}")))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| crate::bind_error(&addr.to_string(), e))?;
        let local = listener.local_addr().map_err(|e| crate::bind_error(&addr.to_string(), e))?;
        let _ = writeln!(out, "listening on http://{local} ({} datasets)", svc.datasets().len());
        let _ = out.flush();
        axum::serve(listener, router(svc))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Io(format!("server: {e}")))
    })
}
