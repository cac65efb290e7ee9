use std::sync::Arc;

use artherapist_core::engine::SessionEvent;
use artherapist_store::{DocType, DocumentEnvelope, Store};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::header::{ETAG, IF_MATCH, LOCATION};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use crate::agent::{self, LaunchRequest};
use crate::error::{ApiError, ErrorCode};

pub const PREFIX: &str = "/api/v1";
pub const DOCTOR_HEADER: &str = "x-doctor-id";

type Shared = State<Arc<Store>>;
type ApiResult = Result<Response, ApiError>;

const COLLECTIONS: [(&str, DocType); 5] = [
    ("patients", DocType::Patient),
    ("doctors", DocType::Doctor),
    ("games", DocType::Game),
    ("programs", DocType::Program),
    ("treatments", DocType::Treatment),
];

fn collection(t: DocType) -> &'static str {
    COLLECTIONS.iter().find(|(_, d)| *d == t).map(|(c, _)| *c).expect("every type has a collection")
}

pub fn router(store: Arc<Store>) -> Router {
    let mut api = Router::new();
    for (name, t) in COLLECTIONS {
        let item = if matches!(t, DocType::Patient | DocType::Program) {
            get(move |s, p| get_doc(s, t, p)).put(move |s, p, h, b| put_doc(s, t, p, h, b))
        } else {
            get(move |s, p| get_doc(s, t, p))
        };
        api = api
            .route(&format!("/{name}"), post(move |s, b| create_doc(s, t, b)).get(move |s| list_docs(s, t)))
            .route(&format!("/{name}/{{id}}"), item);
    }
    let api = api
        .route("/patients/{id}/report", get(report))
        .route("/sessions", post(launch).get(list_sessions))
        .route("/sessions/{id}", get(session_meta))
        .route("/sessions/{id}/events", post(ingest).get(session_events))
        .route("/sessions/{id}/metrics", get(metrics));
    Router::new().nest(PREFIX, api).fallback(not_found).with_state(store)
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such endpoint")
}

/// Runs store work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::malformed(format!("invalid JSON body: {e}")))
}

fn etag(version: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{version}\"")).expect("digits are a valid header value")
}

fn doc_response(status: StatusCode, env: DocumentEnvelope, location: bool) -> Response {
    let mut headers = HeaderMap::new();
    headers.insert(ETAG, etag(env.version));
    if location {
        let url = format!("{PREFIX}/{}/{}", collection(env.doc_type), env.doc_id);
        if let Ok(v) = HeaderValue::from_str(&url) {
            headers.insert(LOCATION, v);
        }
    }
    (status, headers, Json(env)).into_response()
}

/// Accepts `3`, `"3"` and `W/"3"`.
fn if_match(headers: &HeaderMap) -> Result<u64, ApiError> {
    let raw = headers
        .get(IF_MATCH)
        .ok_or_else(|| ApiError::new(ErrorCode::PreconditionRequired, "If-Match header with the current version is required"))?;
    let s = raw.to_str().unwrap_or("").trim();
    let s = s.strip_prefix("W/").unwrap_or(s).trim_matches('"');
    s.parse()
        .map_err(|_| ApiError::malformed(format!("If-Match must be a document version, got `{}`", raw.to_str().unwrap_or("?"))))
}

fn doctor_id(headers: &HeaderMap) -> Option<String> {
    headers.get(DOCTOR_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string)
}

fn body_id(t: DocType, body: &Value) -> Result<String, ApiError> {
    let field = t.id_field();
    body.get(field).and_then(Value::as_str).map(str::to_string).ok_or_else(|| {
        ApiError::validation(vec![artherapist_core::domain::ValidationError::new(
            field,
            "type.string",
            format!("{field} must be a string"),
        )])
    })
}

async fn create_doc(State(store): Shared, t: DocType, body: Bytes) -> ApiResult {
    let body: Value = parse(&body)?;
    let env = blocking(move || {
        let id = body_id(t, &body)?;
        Ok(store.put_document(t, &id, &body, 0)?)
    })
    .await?;
    Ok(doc_response(StatusCode::CREATED, env, true))
}

async fn list_docs(State(store): Shared, t: DocType) -> ApiResult {
    let docs = blocking(move || {
        let ids = store.list_documents(t)?;
        ids.iter().map(|id| store.get_document(t, id).map_err(ApiError::from)).collect::<Result<Vec<_>, _>>()
    })
    .await?;
    Ok(Json(docs).into_response())
}

async fn get_doc(State(store): Shared, t: DocType, Path(id): Path<String>) -> ApiResult {
    let env = blocking(move || Ok(store.get_document(t, &id)?)).await?;
    Ok(doc_response(StatusCode::OK, env, false))
}

async fn put_doc(State(store): Shared, t: DocType, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> ApiResult {
    let expected = if_match(&headers)?;
    let body: Value = parse(&body)?;
    let doctor = doctor_id(&headers);
    let env = blocking(move || {
        // Existence is checked first so an unknown id is a 404 regardless
        // of the version sent.
        store.get_document(t, &id)?;
        if expected == 0 {
            return Err(ApiError::new(ErrorCode::VersionConflict, "If-Match version 0 never matches an existing document"));
        }
        match t {
            DocType::Patient => agent::update_patient(&store, &id, &body, expected, doctor.as_deref()),
            _ => Ok(store.put_document(t, &id, &body, expected)?),
        }
    })
    .await?;
    Ok(doc_response(StatusCode::OK, env, false))
}

async fn launch(State(store): Shared, body: Bytes) -> ApiResult {
    let req: LaunchRequest = parse(&body)?;
    let out = blocking(move || agent::launch_session(&store, &req)).await?;
    let mut headers = HeaderMap::new();
    if let Ok(v) = HeaderValue::from_str(&format!("{PREFIX}/sessions/{}", out.session.session_id)) {
        headers.insert(LOCATION, v);
    }
    Ok((StatusCode::CREATED, headers, Json(out)).into_response())
}

async fn list_sessions(State(store): Shared) -> ApiResult {
    let metas = blocking(move || Ok(store.list_sessions()?)).await?;
    Ok(Json(metas).into_response())
}

async fn session_meta(State(store): Shared, Path(id): Path<String>) -> ApiResult {
    let meta = blocking(move || Ok(store.session_meta(&id)?)).await?;
    Ok(Json(meta).into_response())
}

/// The body is either a single event or an array of events.
#[derive(Deserialize)]
#[serde(untagged)]
enum Batch {
    Many(Vec<SessionEvent>),
    One(Box<SessionEvent>),
}

async fn ingest(State(store): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let events = match parse::<Batch>(&body)? {
        Batch::Many(v) => v,
        Batch::One(e) => vec![*e],
    };
    let out = blocking(move || agent::ingest_events(&store, &id, &events)).await?;
    Ok((StatusCode::ACCEPTED, Json(out)).into_response())
}

async fn session_events(State(store): Shared, Path(id): Path<String>, headers: HeaderMap) -> ApiResult {
    let doctor = doctor_id(&headers);
    let events = blocking(move || agent::session_events(&store, &id, doctor.as_deref())).await?;
    Ok(Json(events).into_response())
}

async fn metrics(State(store): Shared, Path(id): Path<String>) -> ApiResult {
    let m = blocking(move || agent::session_metrics(&store, &id)).await?;
    Ok(Json(m).into_response())
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    include: Option<String>,
}

async fn report(State(store): Shared, Path(id): Path<String>, Query(q): Query<ReportQuery>, headers: HeaderMap) -> ApiResult {
    let include_events = match q.include.as_deref() {
        None | Some("") => false,
        Some("events") => true,
        Some(other) => return Err(ApiError::malformed(format!("unknown include `{other}`; the only value is `events`"))),
    };
    let doctor = doctor_id(&headers);
    let r = blocking(move || agent::patient_report(&store, &id, doctor.as_deref(), include_events)).await?;
    Ok(Json(r).into_response())
}
