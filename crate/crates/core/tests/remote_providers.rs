use std::io::Write;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use ppa_core::providers::remote::{ApiKey, HttpNli, OpenAiChat, OpenAiEmbedder};
use ppa_core::providers::{
    ChatProvider, ChatRequest, EmbeddingProvider, NliLabel, NliProvider, ProviderConfig,
    ProviderError,
};
use serde_json::{json, Value};

const KEY: &str = "sk-test-0123456789abcdef";

#[derive(Clone, Default)]
struct Server {
    hits: Arc<AtomicU32>,
    fail_first: u32,
    fail_status: u16,
    bodies: Arc<Mutex<Vec<Value>>>,
}

impl Server {
    fn gate(&self, body: Value) -> Result<(), (StatusCode, String)> {
        self.bodies.lock().unwrap().push(body);
        let n = self.hits.fetch_add(1, Ordering::SeqCst);
        if n < self.fail_first {
            let status = StatusCode::from_u16(self.fail_status).unwrap();
            return Err((status, format!("bad key {KEY} rejected")));
        }
        Ok(())
    }
}

async fn chat(State(s): State<Server>, Json(body): Json<Value>) -> Result<Json<Value>, (StatusCode, String)> {
    s.gate(body)?;
    Ok(Json(json!({"choices": [{"message": {"content": "{\"A\": \"hi\"}"}}]})))
}

async fn embed(State(s): State<Server>, Json(body): Json<Value>) -> Result<Json<Value>, (StatusCode, String)> {
    s.gate(body)?;
    Ok(Json(json!({"data": [{"embedding": [0.6, 0.8, 0.0]}]})))
}

async fn nli(State(s): State<Server>, Json(body): Json<Value>) -> Result<Json<Value>, (StatusCode, String)> {
    s.gate(body)?;
    Ok(Json(json!({"label": "CONTRADICTION", "score": 0.9})))
}

async fn serve(state: Server) -> SocketAddr {
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embed))
        .route("/v1/nli", post(nli))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

fn config(addr: SocketAddr, retries: u32) -> ProviderConfig {
    let mut c = ProviderConfig::new(format!("http://{addr}/v1"), ApiKey::new(KEY), "test-model");
    c.retries = retries;
    c.backoff_base = Duration::from_millis(5);
    c.timeout = Duration::from_secs(5);
    c
}

#[derive(Clone, Default)]
struct Captured(Arc<Mutex<Vec<u8>>>);

impl Write for Captured {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

#[tokio::test]
async fn chat_retries_transient_failures_then_succeeds() {
    let logs = Captured::default();
    let sink = logs.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_writer(move || sink.clone())
        .with_max_level(tracing::Level::TRACE)
        .finish();
    let _guard = tracing::subscriber::set_default(subscriber);

    let state = Server {
        fail_first: 2,
        fail_status: 503,
        ..Default::default()
    };
    let addr = serve(state.clone()).await;
    let chat = OpenAiChat::new(config(addr, 3)).unwrap();
    let req = ChatRequest::new("hello").with_temperature(0.0).with_seed(Some(7));
    let out = chat.complete(&req).await.unwrap();
    assert_eq!(out, "{\"A\": \"hi\"}");
    assert_eq!(state.hits.load(Ordering::SeqCst), 3);

    let body = &state.bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["seed"], 7);

    let text = String::from_utf8(logs.0.lock().unwrap().clone()).unwrap();
    assert!(text.contains("retrying"), "{text}");
    assert!(!text.contains(KEY));
}

#[tokio::test]
async fn exhausted_retries_surface_scrubbed_error() {
    let state = Server {
        fail_first: u32::MAX,
        fail_status: 500,
        ..Default::default()
    };
    let addr = serve(state.clone()).await;
    let chat = OpenAiChat::new(config(addr, 2)).unwrap();
    let err = chat.complete(&ChatRequest::new("hello")).await.unwrap_err();
    assert!(err.is_transient());
    assert!(matches!(err, ProviderError::Rejected { status: 500, .. }));
    assert!(!err.to_string().contains(KEY), "{err}");
    assert!(!format!("{err:?}").contains(KEY));
    assert_eq!(state.hits.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let state = Server {
        fail_first: u32::MAX,
        fail_status: 400,
        ..Default::default()
    };
    let addr = serve(state.clone()).await;
    let chat = OpenAiChat::new(config(addr, 3)).unwrap();
    let err = chat.complete(&ChatRequest::new("hello")).await.unwrap_err();
    assert!(!err.is_transient());
    assert_eq!(state.hits.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn embedder_probes_dimension_and_nli_parses_labels() {
    let state = Server::default();
    let addr = serve(state.clone()).await;
    let e = OpenAiEmbedder::connect(config(addr, 0)).await.unwrap();
    assert_eq!(e.dimension(), 3);
    assert_eq!(e.embed("text").await.unwrap(), vec![0.6, 0.8, 0.0]);
    assert!(matches!(e.embed("  ").await, Err(ProviderError::EmptyInput)));

    let n = HttpNli::new(config(addr, 0)).unwrap();
    let v = n.classify("premise", "hypothesis").await.unwrap();
    assert_eq!(v.label, NliLabel::Contradict);
    assert!((v.confidence - 0.9).abs() < 1e-12);
    let last = state.bodies.lock().unwrap().last().cloned().unwrap();
    assert_eq!(last, json!({"premise": "premise", "hypothesis": "hypothesis"}));
}

#[tokio::test]
async fn unreachable_endpoint_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let chat = OpenAiChat::new(config(addr, 0)).unwrap();
    let err = chat.complete(&ChatRequest::new("x")).await.unwrap_err();
    assert!(err.is_transient(), "{err}");
    assert!(!err.to_string().contains(KEY));
}

#[test]
fn config_validation() {
    let mut c = ProviderConfig::new("ftp://nope", ApiKey::new(KEY), "m");
    assert!(c.validate().is_err());
    c.base_url = "http://ok".into();
    c.retries = 99;
    assert!(c.validate().is_err());
    c.retries = 1;
    assert!(c.validate().is_ok());
    assert!(!format!("{c:?}").contains(KEY));
}
