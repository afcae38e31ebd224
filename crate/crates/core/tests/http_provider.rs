use std::net::SocketAddr;

use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use xdomain::embedding::{fallback_encode, provider_from_spec, EmbedError, EmbeddingKind, EmbeddingProvider, HttpProvider};

const DIM: usize = 32;

fn vectors(body: &Value) -> Vec<Vec<f32>> {
    body["texts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| fallback_encode(t.as_str().unwrap(), DIM).unwrap().into_inner())
        .collect()
}

/// Embedding service stub: echoes fallback vectors, or misbehaves per route.
fn spawn_server() -> SocketAddr {
    let app = Router::new()
        .route("/ok", post(|Json(b): Json<Value>| async move { Json(json!({"vectors": vectors(&b), "dimension": DIM})) }))
        .route("/scaled", post(|Json(b): Json<Value>| async move {
            let v: Vec<Vec<f32>> = vectors(&b).into_iter().map(|v| v.into_iter().map(|x| x * 3.0).collect()).collect();
            Json(json!({"vectors": v, "dimension": DIM}))
        }))
        .route("/kind", post(|Json(b): Json<Value>| async move {
            let n = b["texts"].as_array().unwrap().len();
            let code = if b["kind"] == "sentence" { 1.0 } else { -1.0 };
            let v = vec![vec![code; DIM]; n];
            Json(json!({"vectors": v, "dimension": DIM}))
        }))
        .route("/reject", post(|| async { (StatusCode::UNPROCESSABLE_ENTITY, "no") }))
        .route("/crash", post(|| async { (StatusCode::INTERNAL_SERVER_ERROR, "boom") }))
        .route("/wrongdim", post(|Json(b): Json<Value>| async move { Json(json!({"vectors": vectors(&b), "dimension": 16})) }))
        .route("/short", post(|| async { Json(json!({"vectors": [], "dimension": DIM})) }))
        .route("/garbage", post(|| async { "not json" }));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn provider(addr: SocketAddr, route: &str, kind: EmbeddingKind) -> HttpProvider {
    HttpProvider::new(format!("http://{addr}/{route}"), DIM, kind).unwrap()
}

#[test]
fn http_provider_contract() {
    let addr = spawn_server();
    let texts = ["battery cathode", "thin films of ZnO"];

    let ok = provider(addr, "ok", EmbeddingKind::Sentence);
    let got = ok.embed_texts(&texts).unwrap();
    for (g, t) in got.iter().zip(texts) {
        assert_eq!(g, &fallback_encode(t, DIM).unwrap());
    }
    assert!(ok.embed_texts(&[]).unwrap().is_empty());

    // returned vectors are normalized client-side
    let scaled = provider(addr, "scaled", EmbeddingKind::Document).embed_texts(&texts).unwrap();
    assert!(scaled.iter().all(|v| v.is_unit()));

    // the request carries the provider kind
    let s = provider(addr, "kind", EmbeddingKind::Sentence).embed_texts(&["x"]).unwrap();
    let d = provider(addr, "kind", EmbeddingKind::Document).embed_texts(&["x"]).unwrap();
    assert!(s[0].as_slice()[0] > 0.0 && d[0].as_slice()[0] < 0.0);

    let err = |route: &str| provider(addr, route, EmbeddingKind::Sentence).embed_texts(&texts).unwrap_err();
    assert!(matches!(err("reject"), EmbedError::Contract(_)));
    assert!(matches!(err("wrongdim"), EmbedError::Contract(_)));
    assert!(matches!(err("short"), EmbedError::Contract(_)));
    assert!(matches!(err("garbage"), EmbedError::Contract(_)));
    let crash = err("crash");
    assert!(matches!(crash, EmbedError::Transport(_)) && crash.is_retryable());
}

#[test]
fn unreachable_service_is_retryable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let p = provider_from_spec(&format!("http:http://{addr}/embed"), EmbeddingKind::Sentence, DIM).unwrap();
    assert_eq!(p.name(), format!("http:http://{addr}/embed"));
    let e = p.embed_texts(&["hello"]).unwrap_err();
    assert!(e.is_retryable(), "{e:?}");
}

#[test]
fn provider_spec_parsing() {
    let f = provider_from_spec("fallback", EmbeddingKind::Document, 64).unwrap();
    assert_eq!((f.dimension(), f.kind()), (64, EmbeddingKind::Document));
    assert!(provider_from_spec("fallback", EmbeddingKind::Document, 4).is_err());
    assert!(provider_from_spec("ftp://x", EmbeddingKind::Document, 64).is_err());
    let h = provider_from_spec("https://example.invalid/embed", EmbeddingKind::Sentence, 8).unwrap();
    assert_eq!(h.name(), "http:https://example.invalid/embed");
}
