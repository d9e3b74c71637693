use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use fable_core::backends::{
    BackendError, BackendPolicy, ChatMessage, ChatRequest, Embedder, Generator, Guarded,
    HttpEmbedder, HttpEndpoint, HttpGenerator, HttpScorer, ScoreTransform, Scorer,
};

async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn fast_policy() -> BackendPolicy {
    BackendPolicy { max_retries: 3, backoff_base_ms: 5, timeout_ms: 5_000, ..Default::default() }
}

fn request() -> ChatRequest {
    ChatRequest::new(vec![ChatMessage::system("s"), ChatMessage::user("summarize")]).seed(Some(3))
}

#[tokio::test]
async fn retries_two_503s_then_succeeds() {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/gen",
            post(|State(hits): State<Arc<AtomicUsize>>, Json(body): Json<Value>| async move {
                assert_eq!(body["seed"], 3);
                assert_eq!(body["messages"][1]["role"], "user");
                if hits.fetch_add(1, Ordering::SeqCst) < 2 {
                    (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "busy"})))
                } else {
                    (StatusCode::OK, Json(json!({"choices": [{"message": {"content": "a summary"}}]})))
                }
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let g = Guarded::new(HttpGenerator::new(HttpEndpoint::new(format!("{base}/gen"))), fast_policy());
    assert_eq!(g.generate(&request()).await.unwrap(), "a summary");
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(g.retries(), 2);
}

#[tokio::test]
async fn client_errors_and_empty_completions_are_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/empty",
            post(|State(hits): State<Arc<AtomicUsize>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                Json(json!({"text": "  "}))
            }),
        )
        .route(
            "/bad",
            post(|State(hits): State<Arc<AtomicUsize>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                (StatusCode::BAD_REQUEST, "nope")
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let empty = Guarded::new(HttpGenerator::new(HttpEndpoint::new(format!("{base}/empty"))), fast_policy());
    assert!(matches!(empty.generate(&request()).await, Err(BackendError::EmptyCompletion)));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
    let bad = Guarded::new(HttpGenerator::new(HttpEndpoint::new(format!("{base}/bad"))), fast_policy());
    assert!(matches!(
        bad.generate(&request()).await,
        Err(BackendError::Status { status: 400, .. })
    ));
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn exhausts_retries_on_persistent_5xx() {
    let app = Router::new().route("/gen", post(|| async { StatusCode::INTERNAL_SERVER_ERROR }));
    let base = serve(app).await;
    let g = Guarded::new(HttpGenerator::new(HttpEndpoint::new(format!("{base}/gen"))), fast_policy());
    match g.generate(&request()).await {
        Err(BackendError::Exhausted { attempts, .. }) => assert_eq!(attempts, 4),
        other => panic!("{other:?}"),
    }
}

#[tokio::test]
async fn scorer_applies_logistic_transform() {
    let app = Router::new().route(
        "/score",
        post(|Json(body): Json<Value>| async move {
            assert_eq!(body["text_a"], "query facet");
            assert_eq!(body["text_b"], "candidate facet");
            Json(json!({"score": 2.2}))
        }),
    );
    let base = serve(app).await;
    let s = HttpScorer::new(HttpEndpoint::new(format!("{base}/score")), ScoreTransform::Logistic);
    let v = s.score("query facet", "candidate facet").await.unwrap();
    let want = 1.0 / (1.0 + (-2.2f64).exp());
    assert!((v - want).abs() < 1e-12);
    assert!((v - 0.9002).abs() < 1e-4);

    let identity = HttpScorer::new(HttpEndpoint::new(format!("{base}/score")), ScoreTransform::Identity);
    assert!(matches!(
        identity.score("query facet", "candidate facet").await,
        Err(BackendError::InvalidResponse(_))
    ));
}

#[tokio::test]
async fn embedder_checks_dimension_and_sends_token() {
    let app = Router::new().route(
        "/embed",
        post(|headers: axum::http::HeaderMap, Json(body): Json<Value>| async move {
            assert_eq!(headers["authorization"], "Bearer t0k");
            let n = body["text"].as_str().unwrap().len();
            Json(json!({"vector": vec![0.5; n]}))
        }),
    );
    let base = serve(app).await;
    let mut ep = HttpEndpoint::new(format!("{base}/embed"));
    ep.token = Some("t0k".into());
    let e = HttpEmbedder::new(ep, 3);
    assert_eq!(e.embed("abc").await.unwrap(), vec![0.5; 3]);
    assert!(matches!(e.embed("abcd").await, Err(BackendError::InvalidResponse(_))));
}

#[tokio::test]
async fn guarded_rejects_invalid_requests_without_calling() {
    let hits = Arc::new(AtomicUsize::new(0));
    let app = Router::new()
        .route(
            "/gen",
            post(|State(hits): State<Arc<AtomicUsize>>| async move {
                hits.fetch_add(1, Ordering::SeqCst);
                Json(json!({"text": "x"}))
            }),
        )
        .with_state(hits.clone());
    let base = serve(app).await;
    let g = Guarded::new(HttpGenerator::new(HttpEndpoint::new(format!("{base}/gen"))), fast_policy());
    let bad = ChatRequest::new(vec![ChatMessage::assistant("a")]);
    assert!(matches!(g.generate(&bad).await, Err(BackendError::InvalidRequest(_))));
    assert_eq!(hits.load(Ordering::SeqCst), 0);
}
