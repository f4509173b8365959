//! Drives the annotation API in-process: save an annotation, read it back,
//! and trip the overlap check.

use aoml::corpus::{write_corpus, ReviewDocument};
use aoml::pipeline::Project;
use aoml::service::{router, AppState};
use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: &str) -> (u16, String) {
    let request = Request::builder().method(method).uri(uri).body(Body::from(body.to_string())).unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status().as_u16();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

#[tokio::main]
async fn main() -> aoml::Result<()> {
    let dir = std::env::temp_dir().join(format!("aoml-example-service-{}", std::process::id()));
    let project = Project::new(&dir);
    write_corpus(&project.corpus_path(), &[ReviewDocument::new("r1", "battery life is great")])?;
    let app = router(AppState::new(project, None));

    let (status, body) = call(&app, "GET", "/api/documents", "").await;
    println!("GET documents -> {status} {body}");
    let save = r#"{"entities": [{"start": 0, "end": 12, "label": "ASP"}, {"start": 16, "end": 21, "label": "OPI"}],
                   "relations": [{"head": 0, "tail": 1, "label": "ASP-OPI"}]}"#;
    let (status, _) = call(&app, "PUT", "/api/documents/r1/annotations", save).await;
    println!("PUT annotation -> {status}");
    let (status, body) = call(&app, "GET", "/api/documents/r1/annotations", "").await;
    println!("GET annotation -> {status}\n{body}");
    let overlap = r#"{"entities": [{"start": 0, "end": 12, "label": "ASP"}, {"start": 8, "end": 15, "label": "OPI"}]}"#;
    let (status, body) = call(&app, "PUT", "/api/documents/r1/annotations", overlap).await;
    println!("PUT overlapping -> {status} {body}");
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
