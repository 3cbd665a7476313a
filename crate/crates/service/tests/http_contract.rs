use std::sync::Arc;

use async_trait::async_trait;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ppa_core::pipeline::prompts::render_generation_prompt;
use ppa_core::providers::{
    ChatProvider, ChatRequest, FailingChat, HashedEmbedder, ProviderResult, Providers,
    ScriptedNli,
};
use ppa_core::samples;
use ppa_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

/// Plays Rajiv's side of the sample dialogue, answers the final improv
/// question with the scripted draft and refinement, and extracts two facts.
struct SampleChat;

fn reply(text: &str) -> String {
    json!({ samples::SPEAKER: text }).to_string()
}

#[async_trait]
impl ChatProvider for SampleChat {
    fn name(&self) -> String {
        "sample-chat".into()
    }

    async fn complete(&self, req: &ChatRequest) -> ProviderResult<String> {
        let ctx = samples::context();
        let p = &req.prompt;
        if *p == render_generation_prompt(&ctx) {
            return Ok(reply(samples::GENERAL_RESPONSE));
        }
        if p.contains("was about to reply") && p.contains(samples::GENERAL_RESPONSE) {
            return Ok(reply(samples::REFINED_RESPONSE));
        }
        if p.contains("# Task: Extract personal facts") {
            return Ok(json!([
                {"name": "Rajiv", "relation": "is learning", "object": "guitar basics"},
                {"name": "Francisco", "relation": "asked about", "object": "improv classes"},
            ])
            .to_string());
        }
        let last = samples::TURNS
            .iter()
            .enumerate()
            .filter(|(_, (s, t))| *s == samples::OTHER && p.contains(t))
            .map(|(i, _)| i)
            .max()
            .unwrap_or(0);
        Ok(reply(samples::TURNS[last + 1].1))
    }
}

struct Harness {
    app: Router,
    chat: Arc<FailingChat>,
}

fn harness(config: ServiceConfig) -> Harness {
    let chat = Arc::new(FailingChat::fail_first(0, Arc::new(SampleChat)));
    let providers = Providers::new(
        chat.clone(),
        Arc::new(HashedEmbedder::new(64)),
        Arc::new(ScriptedNli::new()),
    );
    Harness {
        app: router(AppState::open(providers, config).unwrap()),
        chat,
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value)
}

fn create_body(dialogue: &str) -> Value {
    json!({
        "dialogue_id": dialogue,
        "speakers": {"agent": samples::SPEAKER, "user": samples::OTHER},
        "personas": {"Rajiv": samples::RAJIV_MEMORY},
        "config": {"strategy": "ppa", "seed": 3},
    })
}

async fn create(app: &Router, dialogue: &str) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", Some(create_body(dialogue))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn play_sample(app: &Router, id: &str) -> Value {
    let mut last = Value::Null;
    for (speaker, text) in samples::TURNS {
        if speaker == samples::OTHER {
            let (status, v) = call(app, "POST", &format!("/v1/sessions/{id}/turns"), Some(json!({"text": text}))).await;
            assert_eq!(status, StatusCode::OK, "{v}");
            last = v;
        }
    }
    last
}

fn assert_error(status: StatusCode, v: &Value, want_status: StatusCode, code: &str, retryable: bool) {
    assert_eq!(status, want_status, "{v}");
    assert_eq!(v["code"], code, "{v}");
    assert_eq!(v["retryable"], retryable, "{v}");
    assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn healthz_reports_providers() {
    let h = harness(ServiceConfig::default());
    let (status, v) = call(&h.app, "GET", "/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert!(v["providers"].is_object());
}

#[tokio::test]
async fn create_loads_personas_only() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    let (status, mem) = call(&h.app, "GET", "/v1/dialogues/d1/memory?speaker=Rajiv", None).await;
    assert_eq!(status, StatusCode::OK);
    let mem = mem.as_array().unwrap();
    assert_eq!(mem.len(), 3);
    for (e, text) in mem.iter().zip(samples::RAJIV_MEMORY) {
        assert_eq!(e["text"], text);
        assert_eq!(e["source"], "predefined_persona");
        assert!(e.get("embedding").is_none());
    }
    let (_, other) = call(&h.app, "GET", "/v1/dialogues/d1/memory?speaker=Francisco", None).await;
    assert_eq!(other, json!([]));

    let (status, s) = call(&h.app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(s["status"], "open");
    assert_eq!(s["session_index"], 0);
    assert_eq!(s["turns"], json!([]));
}

#[tokio::test]
async fn gold_query_and_duplicate_sessions_rejected() {
    let h = harness(ServiceConfig::default());
    let mut body = create_body("d1");
    body["config"]["query_type"] = json!("gold");
    let (status, v) = call(&h.app, "POST", "/v1/sessions", Some(body)).await;
    assert_error(status, &v, StatusCode::BAD_REQUEST, "gold_rejected", false);

    create(&h.app, "d1").await;
    let (status, v) = call(&h.app, "POST", "/v1/sessions", Some(create_body("d1"))).await;
    assert_error(status, &v, StatusCode::CONFLICT, "conflict", false);
    // Other dialogues are unaffected.
    create(&h.app, "d2").await;
}

#[tokio::test]
async fn malformed_requests_are_invalid() {
    let h = harness(ServiceConfig::default());
    let (status, v) = call(&h.app, "POST", "/v1/sessions", Some(json!({"dialogue_id": "x"}))).await;
    assert_error(status, &v, StatusCode::BAD_REQUEST, "invalid_request", false);
    let mut body = create_body("x");
    body["speakers"]["user"] = json!(samples::SPEAKER);
    let (status, v) = call(&h.app, "POST", "/v1/sessions", Some(body)).await;
    assert_error(status, &v, StatusCode::BAD_REQUEST, "invalid_request", false);

    let id = create(&h.app, "x").await;
    let (status, v) = call(&h.app, "POST", &format!("/v1/sessions/{id}/turns"), Some(json!({"text": "  "}))).await;
    assert_error(status, &v, StatusCode::BAD_REQUEST, "invalid_request", false);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let h = harness(ServiceConfig::default());
    for (method, uri, body) in [
        ("GET", "/v1/sessions/nope", None),
        ("POST", "/v1/sessions/nope/turns", Some(json!({"text": "hi"}))),
        ("POST", "/v1/sessions/nope/close", None),
        ("GET", "/v1/dialogues/nope/memory?speaker=Rajiv", None),
        ("GET", "/v1/unknown", None),
    ] {
        let (status, v) = call(&h.app, method, uri, body).await;
        assert_error(status, &v, StatusCode::NOT_FOUND, "not_found", false);
    }
    create(&h.app, "d").await;
    let (status, v) = call(&h.app, "GET", "/v1/dialogues/d/memory?speaker=Hailey", None).await;
    assert_error(status, &v, StatusCode::NOT_FOUND, "not_found", false);
}

#[tokio::test]
async fn live_turns_reproduce_pipeline_fixture() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    let last = play_sample(&h.app, &id).await;
    assert_eq!(last["final_response"], samples::REFINED_RESPONSE);
    assert_eq!(last["general_response"], samples::GENERAL_RESPONSE);
    assert_eq!(last["reply"]["speaker"], samples::SPEAKER);
    assert_eq!(last["turn_index"], 7);
    let retrieved = last["retrieved"].as_array().unwrap();
    assert_eq!(retrieved.len(), 1);
    assert_eq!(retrieved[0]["text"], samples::RAJIV_MEMORY[1]);
    assert!((retrieved[0]["score"].as_f64().unwrap() - 0.282842712474619).abs() < 1e-12);
    assert!(retrieved[0]["id"].is_string());
    assert!(retrieved[0].get("embedding").is_none());

    let (_, s) = call(&h.app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let turns = s["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 8);
    for (t, (speaker, text)) in turns.iter().zip(samples::TURNS) {
        assert_eq!(t["speaker"], speaker);
        assert_eq!(t["text"], text);
    }
    assert_eq!(s["last_turn"], last);
}

#[tokio::test]
async fn provider_outage_leaves_session_unchanged() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    let uri = format!("/v1/sessions/{id}/turns");
    let (status, _) = call(&h.app, "POST", &uri, Some(json!({"text": samples::TURNS[0].1}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, before) = call(&h.app, "GET", &format!("/v1/sessions/{id}"), None).await;

    h.chat.set_outage(true);
    let (status, v) = call(&h.app, "POST", &uri, Some(json!({"text": samples::TURNS[2].1}))).await;
    assert_error(status, &v, StatusCode::SERVICE_UNAVAILABLE, "provider_failure", true);
    let (_, after) = call(&h.app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(before, after);

    h.chat.set_outage(false);
    let (status, _) = call(&h.app, "POST", &uri, Some(json!({"text": samples::TURNS[2].1}))).await;
    assert_eq!(status, StatusCode::OK);
    let (_, s) = call(&h.app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(s["turns"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn close_ingests_once_and_blocks_turns() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    for (_, text) in samples::TURNS.iter().filter(|(s, _)| *s == samples::OTHER).take(2) {
        call(&h.app, "POST", &format!("/v1/sessions/{id}/turns"), Some(json!({"text": text}))).await;
    }
    let close = format!("/v1/sessions/{id}/close");
    let (status, v) = call(&h.app, "POST", &close, None).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["entries_added"], 2);
    assert_eq!(v["status"], "closed");
    assert_eq!(v["history_type"], "persona");

    let (status, again) = call(&h.app, "POST", &close, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["entries_added"], 0);

    let (status, v) = call(&h.app, "POST", &format!("/v1/sessions/{id}/turns"), Some(json!({"text": "hi"}))).await;
    assert_error(status, &v, StatusCode::CONFLICT, "session_closed", false);

    let (_, rajiv) = call(&h.app, "GET", "/v1/dialogues/d1/memory?speaker=Rajiv", None).await;
    let extracted: Vec<&Value> = rajiv
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["source"] == "extracted_history")
        .collect();
    assert_eq!(extracted.len(), 1);
    assert_eq!(extracted[0]["text"], "Rajiv is learning guitar basics.");
    assert_eq!(extracted[0]["session_index"], 0);
    let (_, both) = call(&h.app, "GET", "/v1/dialogues/d1/memory", None).await;
    assert_eq!(both.as_array().unwrap().len(), 5);

    // The next session of the same dialogue sees the extracted memory.
    let (status, next) = call(&h.app, "POST", "/v1/sessions", Some(create_body("d1"))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(next["session_index"], 1);
    let (_, rajiv_after) = call(&h.app, "GET", "/v1/dialogues/d1/memory?speaker=Rajiv", None).await;
    assert_eq!(rajiv_after, rajiv);
}

#[tokio::test]
async fn extraction_can_skip_the_user() {
    let h = harness(ServiceConfig {
        extract_user_facts: false,
        ..Default::default()
    });
    let id = create(&h.app, "d1").await;
    call(&h.app, "POST", &format!("/v1/sessions/{id}/turns"), Some(json!({"text": "hi there"}))).await;
    let (_, v) = call(&h.app, "POST", &format!("/v1/sessions/{id}/close"), None).await;
    assert_eq!(v["entries_added"], 1);
    let (_, f) = call(&h.app, "GET", "/v1/dialogues/d1/memory?speaker=Francisco", None).await;
    assert_eq!(f, json!([]));
}

#[tokio::test]
async fn closing_an_empty_session_adds_nothing() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    let (status, v) = call(&h.app, "POST", &format!("/v1/sessions/{id}/close"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["entries_added"], 0);
    assert_eq!(h.chat.attempts(), 0);
}

#[tokio::test]
async fn memory_only_changes_at_session_boundaries() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    let (_, before) = call(&h.app, "GET", "/v1/dialogues/d1/memory", None).await;
    play_sample(&h.app, &id).await;
    let (_, after) = call(&h.app, "GET", "/v1/dialogues/d1/memory", None).await;
    assert_eq!(before, after);
}

#[tokio::test]
async fn concurrent_posts_are_serialized() {
    let h = harness(ServiceConfig::default());
    let id = create(&h.app, "d1").await;
    let uri = format!("/v1/sessions/{id}/turns");
    let posts = (0..6).map(|i| {
        let app = h.app.clone();
        let uri = uri.clone();
        tokio::spawn(async move { call(&app, "POST", &uri, Some(json!({"text": format!("message {i}")}))).await })
    });
    for p in posts {
        assert_eq!(p.await.unwrap().0, StatusCode::OK);
    }
    let (_, s) = call(&h.app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let turns = s["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 12);
    for (i, t) in turns.iter().enumerate() {
        let want = if i % 2 == 0 { samples::OTHER } else { samples::SPEAKER };
        assert_eq!(t["speaker"], want);
    }
}

#[tokio::test]
async fn state_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        store_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let h = harness(config.clone());
    let closed = create(&h.app, "d/1").await;
    call(&h.app, "POST", &format!("/v1/sessions/{closed}/turns"), Some(json!({"text": samples::TURNS[0].1}))).await;
    call(&h.app, "POST", &format!("/v1/sessions/{closed}/close"), None).await;
    let open = create(&h.app, "d/1").await;
    call(&h.app, "POST", &format!("/v1/sessions/{open}/turns"), Some(json!({"text": "still here?"}))).await;
    let (_, mem) = call(&h.app, "GET", "/v1/dialogues/d%2F1/memory", None).await;
    let (_, open_state) = call(&h.app, "GET", &format!("/v1/sessions/{open}"), None).await;
    drop(h);

    let h = harness(config);
    let (_, mem2) = call(&h.app, "GET", "/v1/dialogues/d%2F1/memory", None).await;
    assert_eq!(mem, mem2);
    assert_eq!(mem2.as_array().unwrap().len(), 5);
    let (_, open2) = call(&h.app, "GET", &format!("/v1/sessions/{open}"), None).await;
    assert_eq!(open_state, open2);
    let (status, v) = call(&h.app, "POST", "/v1/sessions", Some(create_body("d/1"))).await;
    assert_error(status, &v, StatusCode::CONFLICT, "conflict", false);
    let (_, c) = call(&h.app, "POST", &format!("/v1/sessions/{open}/close"), None).await;
    assert_eq!(c["status"], "closed");
    let (_, next) = call(&h.app, "POST", "/v1/sessions", Some(create_body("d/1"))).await;
    assert_eq!(next["session_index"], 2);
}

#[tokio::test]
async fn serves_static_client() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>chat</html>").unwrap();
    let h = harness(ServiceConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    });
    let resp = h
        .app
        .clone()
        .oneshot(Request::get("/index.html").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&bytes[..], b"<html>chat</html>");
    let (status, _) = call(&h.app, "GET", "/v1/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
}
