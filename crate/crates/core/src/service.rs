//! HTTP/JSON API over a project directory for the annotation and review
//! interface. Every response carries `X-AOML-Version: 1`.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/documents?offset=&limit=` | paged `{id, annotated, preview}` |
//! | GET | `/api/documents/{id}` | text, tokens, annotation, revision |
//! | GET | `/api/documents/{id}/annotations` | stored canonical annotation bytes |
//! | PUT | `/api/documents/{id}/annotations` | `{revision, entities, relations}` |
//! | POST | `/api/predict` | `{doc_id}` or `{text}` |
//! | GET | `/api/review/queue` | candidates, most confident first |
//! | POST | `/api/review/{doc_id}` | `{verdict, annotation?, note?}` |
//! | GET | `/api/runs` | run names |
//! | GET | `/api/runs/{run}/curve` | NER and REL curves |
//!
//! Errors are `{"error": <kind>, "message": ...}` with 400 for invalid
//! input, 404 for unknown ids, 409 for stale revisions and 503 when no
//! trained models are present.

use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderName, HeaderValue, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::annotate::{AnnotationFile, CharSpanAnnotation, EntityLabel, FileRelation};
use crate::corpus::{tokenize, ReviewDocument, Token};
use crate::error::{Error, Result};
use crate::pipeline::project::{revision_of, ReviewDecision, Verdict};
use crate::pipeline::{display_text, predict_document, Models, Project, SpanText};
use crate::relex::format_percent;

pub const VERSION_HEADER: &str = "x-aoml-version";
pub const API_VERSION: &str = "1";
pub const REVISION_HEADER: &str = "x-aoml-revision";
pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

struct Inner {
    project: Project,
    models: Option<Models>,
    static_dir: Option<PathBuf>,
    /// Serializes annotation and review writes.
    writes: Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(project: Project, models: Option<Models>) -> Self {
        AppState(Arc::new(Inner {
            project,
            models,
            static_dir: None,
            writes: Mutex::new(()),
        }))
    }

    /// Loads the project's models when they exist; prediction answers 503
    /// otherwise.
    pub fn open(project: Project) -> Self {
        let models = match Models::load(&project) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("prediction disabled: {e}");
                None
            }
        };
        AppState::new(project, models)
    }

    /// Serves files under `dir` for paths outside `/api`.
    pub fn with_static_dir(self, dir: PathBuf) -> Self {
        let inner = Arc::try_unwrap(self.0).unwrap_or_else(|_| panic!("state is not shared yet"));
        AppState(Arc::new(Inner {
            static_dir: Some(dir),
            ..inner
        }))
    }
}

pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::RevisionConflict { .. } | Error::DuplicateId(_) | Error::Locked(_) => StatusCode::CONFLICT,
        Error::ModelUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::Io { .. } | Error::File { .. } | Error::Format(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_of(&self.0);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        let body = json!({"error": self.0.kind(), "message": self.0.to_string()});
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Deserialize)]
pub struct Paging {
    #[serde(default)]
    pub offset: usize,
    pub limit: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DocumentSummary {
    pub id: String,
    pub annotated: bool,
    pub preview: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DocumentPage {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<DocumentSummary>,
}

async fn list_documents(State(state): State<AppState>, Query(paging): Query<Paging>) -> ApiResult<Json<DocumentPage>> {
    let project = &state.0.project;
    let corpus = project.load_corpus()?;
    let limit = paging.limit.unwrap_or(DEFAULT_PAGE).clamp(1, MAX_PAGE);
    let items = corpus
        .iter()
        .skip(paging.offset)
        .take(limit)
        .map(|d| DocumentSummary {
            id: d.id.clone(),
            annotated: project.annotation_path(&d.id).exists(),
            preview: display_text(&d.text),
        })
        .collect();
    Ok(Json(DocumentPage {
        total: corpus.len(),
        offset: paging.offset,
        limit,
        items,
    }))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DocumentView {
    #[serde(flatten)]
    pub document: ReviewDocument,
    pub tokens: Vec<Token>,
    pub annotation: Option<AnnotationFile>,
    /// Revision token to send with the next annotation update.
    pub revision: Option<String>,
}

async fn get_document(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<DocumentView>> {
    let project = &state.0.project;
    let document = project.document(&id)?;
    let stored = project.annotation_of(&document)?;
    Ok(Json(DocumentView {
        tokens: tokenize(&document.text),
        annotation: stored.as_ref().map(|s| s.document.to_file()),
        revision: stored.map(|s| s.revision),
        document,
    }))
}

async fn get_annotation(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let project = &state.0.project;
    let document = project.document(&id)?;
    if project.annotation_of(&document)?.is_none() {
        return Err(Error::NotFound(format!("annotation of `{id}`")).into());
    }
    let path = project.annotation_path(&id);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let revision = revision_of(&bytes);
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (HeaderName::from_static(REVISION_HEADER), HeaderValue::from_str(&revision).expect("hex")),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnnotationUpdate {
    /// Revision the edit was based on; absent for a first annotation.
    #[serde(default)]
    pub revision: Option<String>,
    /// When given, must equal the stored document text.
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub entities: Vec<CharSpanAnnotation>,
    #[serde(default)]
    pub relations: Vec<FileRelation>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SavedAnnotation {
    pub revision: String,
    pub annotation: AnnotationFile,
}

async fn put_annotation(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<SavedAnnotation>> {
    let update: AnnotationUpdate = parse_body(&body)?;
    let project = &state.0.project;
    let _guard = state.0.writes.lock().unwrap_or_else(|p| p.into_inner());
    let document = project.document(&id)?;
    let file = AnnotationFile {
        id,
        text: update.text.unwrap_or(document.text),
        entities: update.entities,
        relations: update.relations,
    };
    let stored = project.save_annotation(file, update.revision.as_deref())?;
    Ok(Json(SavedAnnotation {
        revision: stored.revision,
        annotation: stored.document.to_file(),
    }))
}

#[derive(Debug, Deserialize)]
pub struct PredictRequest {
    #[serde(default)]
    pub doc_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct MentionView {
    pub token_start: usize,
    pub token_end: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub label: EntityLabel,
    pub confidence: f32,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct RelationView {
    pub head_index: usize,
    pub tail_index: usize,
    pub aspect: SpanText,
    pub opinion: SpanText,
    pub probability: f32,
    pub percent: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictResponse {
    pub doc_id: Option<String>,
    pub text: String,
    pub tokens: Vec<Token>,
    pub mentions: Vec<MentionView>,
    pub relations: Vec<RelationView>,
}

async fn predict(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<PredictResponse>> {
    let request: PredictRequest = parse_body(&body)?;
    let Some(models) = &state.0.models else {
        return Err(Error::ModelUnavailable("no trained NER and REL checkpoints".into()).into());
    };
    let project = &state.0.project;
    let document = match (request.doc_id, request.text) {
        (Some(id), None) => match project.document(&id) {
            Ok(d) => d,
            Err(Error::NotFound(_)) => project
                .load_unlabeled()?
                .into_iter()
                .find(|d| d.id == id)
                .ok_or_else(|| Error::NotFound(format!("document `{id}`")))?,
            Err(e) => return Err(e.into()),
        },
        (None, Some(text)) => {
            let d = ReviewDocument::new("request", text);
            d.validate()?;
            d
        }
        _ => return Err(Error::InvalidDocument("give exactly one of doc_id and text".into()).into()),
    };
    let p = predict_document(models, &document)?;
    let mentions = p
        .mentions
        .iter()
        .map(|m| {
            let span = p.span_text(m);
            MentionView {
                token_start: m.token_start,
                token_end: m.token_end,
                start: span.start,
                end: span.end,
                text: span.text,
                label: m.label,
                confidence: m.confidence.unwrap_or(0.0),
            }
        })
        .collect();
    let relations = p
        .relations
        .iter()
        .map(|r| RelationView {
            head_index: r.head_index,
            tail_index: r.tail_index,
            aspect: p.span_text(&r.head),
            opinion: p.span_text(&r.tail),
            probability: r.probability,
            percent: format_percent(r.probability),
        })
        .collect();
    let is_corpus = document.id != "request";
    Ok(Json(PredictResponse {
        doc_id: is_corpus.then(|| document.id.clone()),
        text: document.text,
        tokens: p.tokens,
        mentions,
        relations,
    }))
}

async fn review_queue(State(state): State<AppState>) -> ApiResult<Response> {
    Ok(Json(state.0.project.review_queue()?).into_response())
}

#[derive(Debug, Deserialize)]
pub struct ReviewRequest {
    #[serde(default)]
    pub doc_id: Option<String>,
    pub verdict: Verdict,
    #[serde(default)]
    pub annotation: Option<AnnotationFile>,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub timestamp: Option<String>,
}

async fn review(
    State(state): State<AppState>,
    UrlPath(doc_id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let request: ReviewRequest = parse_body(&body)?;
    if request.doc_id.as_ref().is_some_and(|id| *id != doc_id) {
        return Err(Error::InvalidDocument("doc_id in body differs from the path".into()).into());
    }
    let decision = ReviewDecision {
        doc_id: doc_id.clone(),
        verdict: request.verdict,
        annotation: request.annotation,
        note: request.note,
        timestamp: request.timestamp,
    };
    let _guard = state.0.writes.lock().unwrap_or_else(|p| p.into_inner());
    state.0.project.apply_review(decision)?;
    Ok(Json(json!({"doc_id": doc_id, "verdict": request.verdict})))
}

async fn list_runs(State(state): State<AppState>) -> ApiResult<Json<Vec<String>>> {
    Ok(Json(state.0.project.list_runs()?))
}

async fn run_curve(State(state): State<AppState>, UrlPath(run): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let (ner, rel) = state.0.project.run_curves(&run)?;
    Ok(Json(json!({
        "run": run,
        "ner": ner.map(|c| c.records),
        "rel": rel.map(|c| c.records),
    })))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn static_file(State(state): State<AppState>, uri: Uri) -> ApiResult<Response> {
    let missing = || Error::NotFound(uri.path().to_string());
    if uri.path().starts_with("/api/") {
        return Err(missing().into());
    }
    let Some(root) = &state.0.static_dir else {
        return Err(missing().into());
    };
    let relative = Path::new(uri.path().trim_start_matches('/'));
    if relative.components().any(|c| !matches!(c, Component::Normal(_))) {
        return Err(missing().into());
    }
    let mut path = root.join(relative);
    if path.is_dir() {
        path = path.join("index.html");
    }
    let bytes = std::fs::read(&path).map_err(|_| missing())?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response())
}

async fn version_header(mut response: Response) -> Response {
    response
        .headers_mut()
        .insert(HeaderName::from_static(VERSION_HEADER), HeaderValue::from_static(API_VERSION));
    response
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/documents", get(list_documents))
        .route("/api/documents/{id}", get(get_document))
        .route("/api/documents/{id}/annotations", get(get_annotation).put(put_annotation))
        .route("/api/predict", axum::routing::post(predict))
        .route("/api/review/queue", get(review_queue))
        .route("/api/review/{doc_id}", axum::routing::post(review))
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{run}/curve", get(run_curve))
        .fallback(static_file)
        .layer(axum::middleware::map_response(version_header))
        .with_state(state)
}

/// Serves the API until the process is stopped. Static files are served
/// from the project's `web/` directory when it exists.
pub async fn serve(project: Project, addr: &str) -> Result<()> {
    let web = project.root().join("web");
    let mut state = AppState::open(project);
    if web.is_dir() {
        state = state.with_static_dir(web);
    }
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr, e))?;
    log::info!("listening on {addr}");
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::io(addr, e))
}
