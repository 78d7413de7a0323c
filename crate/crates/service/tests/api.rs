use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bayes_arena::sim::{builtin_setup, replay, EpisodeLog, PolicyKind, Setup};
use bayes_arena::vars::Skill;
use bayes_arena_service::{router, serve, AppState, PosteriorView, ServeConfig, ServeError, StateDocument};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    router(AppState::default(), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = json_call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn state(app: &Router, id: &str) -> StateDocument {
    let (status, v) = json_call(app, "GET", &format!("/sessions/{id}/state"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn create_and_inspect() {
    let app = app();
    let (status, v) = json_call(&app, "POST", "/sessions", Some(json!({"scenario": "A"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let doc: StateDocument = serde_json::from_value(v["state"].clone()).unwrap();
    assert_eq!(doc.characters.len(), 7);
    assert_eq!(doc.tick, 0);
    assert!(!doc.legal.is_empty());
    let mt = doc.characters.iter().find(|c| c.id == "MT").unwrap();
    assert!(mt.derived.imminent_death);
    let druid = doc.druid.unwrap();
    assert_eq!(druid.cooldowns.len(), Skill::ALL.len());

    let (status, v) = json_call(&app, "POST", "/sessions", Some(json!({"scenario": "C"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "BadScenario");
    let (status, _) = json_call(&app, "GET", "/sessions/nope/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = json_call(&app, "GET", "/sessions/nope/posterior", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn inline_scenario() {
    let app = app();
    let mut s = builtin_setup(Setup::B);
    s.name = "inline".into();
    let id = create(&app, json!({"scenario": s})).await;
    assert_eq!(state(&app, &id).await.scenario, "inline");
    s.roster.clear();
    let (status, _) = json_call(&app, "POST", "/sessions", Some(json!({"scenario": s}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn human_actions() {
    let app = app();
    let id = create(&app, json!({"scenario": "A"})).await;
    let uri = format!("/sessions/{id}/action");
    let (status, v) = json_call(&app, "POST", &uri, Some(json!({"skill": "small_dd", "target": "Lich"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let events = v["events"].as_array().unwrap();
    assert!(events
        .iter()
        .any(|e| e["type"] == "damage" && e["source"] == "Druid" && e["target"] == "Lich"));
    assert_eq!(v["state"]["tick"], 1);

    let (status, _) = json_call(&app, "POST", &uri, Some(json!({"skill": "big_dd", "target": "Lich"}))).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = json_call(&app, "POST", &uri, Some(json!({"skill": "big_dd", "target": "Lich"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "IllegalAction");
    let (status, _) = json_call(
        &app,
        "POST",
        &uri,
        Some(json!({"skill": "small_heal", "target": "Lich"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(state(&app, &id).await.tick, 2);

    let log = log_of(&app, &id).await;
    assert_eq!(log.records.len(), 2);
    assert!(log.records.iter().all(|r| r.actor == "human"));
}

async fn log_of(app: &Router, id: &str) -> EpisodeLog {
    let (status, bytes) = call(app, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    EpisodeLog::from_jsonl(std::str::from_utf8(&bytes).unwrap()).unwrap()
}

#[tokio::test]
async fn play_to_the_end() {
    let app = app();
    let id = create(&app, json!({"scenario": "A", "params": {"e_id": 0.9}, "seed": 3})).await;
    let uri = format!("/sessions/{id}/bot-step");
    let mut steps = 0;
    while state(&app, &id).await.status == bayes_arena_service::Status::Running {
        let (status, _) = json_call(&app, "POST", &uri, Some(json!({"mode": "argmax"}))).await;
        assert!(status == StatusCode::OK || status == StatusCode::CONFLICT);
        steps += 1;
        assert!(steps < 1000, "never finished");
    }
    let doc = state(&app, &id).await;
    assert!(doc.legal.is_empty());
    assert!(doc.outcome.is_some());
    assert_eq!(doc.replay_verified, Some(true));

    let (status, v) = json_call(&app, "POST", &uri, None).await;
    assert_eq!(status, StatusCode::GONE);
    assert_eq!(v["error"], "SessionFinished");
    let (status, _) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/action"),
        Some(json!({"skill": "small_dd", "target": "Lich"})),
    )
    .await;
    assert_eq!(status, StatusCode::GONE);

    let log = log_of(&app, &id).await;
    assert_eq!(log.records.len(), steps);
    let end = log.end.clone().unwrap();
    assert_eq!(replay(&log).unwrap().digest(), end.state_digest);
}

#[tokio::test]
async fn bot_heals_the_dying_tank() {
    let app = app();
    let id = create(&app, json!({"scenario": "A", "params": {"e_id": 0.9}})).await;
    let (status, v) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/bot-step"),
        Some(json!({"mode": "argmax"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["idle"], false);
    assert_eq!(v["action"]["target"], "MT");
    let skill: Skill = serde_json::from_value(v["action"]["skill"].clone()).unwrap();
    assert_eq!(skill.default_side(), bayes_arena::vars::Side::Ally);
    let posterior: PosteriorView = serde_json::from_value(v["posterior"].clone()).unwrap();
    assert_eq!(posterior.tick, 0);
    assert_eq!(posterior.top_pairs[0].target, "MT");
}

#[tokio::test]
async fn sampled_bot_is_reproducible() {
    let app = app();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let id = create(&app, json!({"scenario": "B", "seed": 11})).await;
        let mut actions = Vec::new();
        for _ in 0..15 {
            let (_, v) = json_call(
                &app,
                "POST",
                &format!("/sessions/{id}/bot-step"),
                Some(json!({"mode": "sample"})),
            )
            .await;
            actions.push(v["action"].clone());
        }
        runs.push(actions);
    }
    assert_eq!(runs[0], runs[1]);
}

#[tokio::test]
async fn posterior_is_normalized_and_pure() {
    let app = app();
    let id = create(&app, json!({"scenario": "B"})).await;
    let uri = format!("/sessions/{id}/posterior");
    let before = state(&app, &id).await;
    let (status, first) = json_call(&app, "GET", &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, second) = json_call(&app, "GET", &uri, None).await;
    assert_eq!(first, second);
    let after = state(&app, &id).await;
    assert_eq!(
        serde_json::to_value(before).unwrap(),
        serde_json::to_value(after).unwrap()
    );

    let view: PosteriorView = serde_json::from_value(first).unwrap();
    let sum: f64 = view.targets.iter().map(|t| t.prob).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    assert_eq!(view.skills_by_target.len(), 3);
    assert_eq!(view.top_pairs.len(), 10);
    assert_eq!(view.availability.len(), 7);
    for ts in &view.skills_by_target {
        let sum: f64 = ts.skills.iter().map(|s| s.prob).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
    // foes never receive ally-side skills
    let doc = state(&app, &id).await;
    for ts in &view.skills_by_target {
        let ally = doc.characters.iter().find(|c| c.id == ts.target).unwrap().ally;
        for s in &ts.skills {
            if s.value.default_side() == bayes_arena::vars::Side::Ally && !ally {
                assert_eq!(s.prob, 0.0);
            }
        }
    }
    assert!(view
        .skills_by_target
        .iter()
        .any(|ts| ts.target == "Add" || ts.target == "Lich"));
    for p in &view.top_pairs {
        assert_eq!(
            p.legal,
            doc.legal.iter().any(|a| a.skill == p.skill && a.target == p.target)
        );
    }
}

#[tokio::test]
async fn bot_idles_when_nothing_is_legal() {
    let app = app();
    let mut s = builtin_setup(Setup::A);
    let druid = s.roster.iter_mut().find(|e| e.policy == PolicyKind::Druid).unwrap();
    druid.mana = 0;
    s.druid_mana_regen = 0;
    let id = create(&app, json!({"scenario": s})).await;
    // regen_mana costs nothing; spend it first
    let (status, _) = json_call(
        &app,
        "POST",
        &format!("/sessions/{id}/action"),
        Some(json!({"skill": "regen_mana", "target": "Druid"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let mut doc = state(&app, &id).await;
    while !doc.legal.is_empty() {
        let a = doc.legal[0].clone();
        let (status, v) = json_call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!(a))).await;
        assert_eq!(status, StatusCode::OK);
        doc = serde_json::from_value(v["state"].clone()).unwrap();
    }
    let tick = doc.tick;
    let (status, v) = json_call(&app, "POST", &format!("/sessions/{id}/bot-step"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["idle"], true);
    assert!(v["action"].is_null());
    assert_eq!(v["state"]["tick"], tick + 1);
}

#[tokio::test]
async fn train_from_played_sessions() {
    let app = app();
    let id = create(&app, json!({"scenario": "A", "seed": 5})).await;
    for _ in 0..20 {
        let doc = state(&app, &id).await;
        if doc.legal.is_empty() {
            break;
        }
        let a = doc.legal[doc.tick as usize % doc.legal.len()].clone();
        let (status, _) = json_call(&app, "POST", &format!("/sessions/{id}/action"), Some(json!(a))).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, v) = json_call(
        &app,
        "POST",
        "/train",
        Some(json!({"sessions": [id], "pseudocount": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    let model_id = v["model_id"].as_str().unwrap().to_string();
    assert!(v["report"]["records"].as_u64().unwrap() > 0);
    assert!(v["report"]["coverage"].as_object().unwrap().contains_key("target.hp"));

    let (status, models) = json_call(&app, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(models[0]["id"], model_id.as_str());

    let learned = create(&app, json!({"scenario": "A", "model": model_id})).await;
    assert_eq!(state(&app, &learned).await.model.as_deref(), Some(model_id.as_str()));
    let (status, _) = json_call(&app, "POST", &format!("/sessions/{learned}/bot-step"), None).await;
    assert!(status == StatusCode::OK || status == StatusCode::CONFLICT);

    let (status, _) = json_call(
        &app,
        "POST",
        "/sessions",
        Some(json!({"scenario": "A", "model": "m999"})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn train_rejects_empty_and_unknown_sources() {
    let app = app();
    let id = create(&app, json!({"scenario": "A"})).await;
    let (status, v) = json_call(
        &app,
        "POST",
        "/train",
        Some(json!({"sessions": [id], "pseudocount": 0})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "NoData");
    let (status, _) = json_call(&app, "POST", "/train", Some(json!({"sessions": ["ghost"]}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, v) = json_call(&app, "POST", "/train", Some(json!({"logs": ["{not json"]}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "MalformedLog");
}

#[tokio::test]
async fn train_from_uploaded_logs() {
    let app = app();
    let id = create(&app, json!({"scenario": "B", "seed": 2})).await;
    for _ in 0..10 {
        json_call(
            &app,
            "POST",
            &format!("/sessions/{id}/bot-step"),
            Some(json!({"mode": "sample"})),
        )
        .await;
    }
    let (_, bytes) = call(&app, "GET", &format!("/sessions/{id}/log"), None).await;
    let text = String::from_utf8(bytes).unwrap();
    let (status, v) = json_call(&app, "POST", "/train", Some(json!({"logs": [text]}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_steps_are_serialized() {
    let app = app();
    let id = create(&app, json!({"scenario": "B", "seed": 9})).await;
    let mut handles = Vec::new();
    for _ in 0..16 {
        let (writer, reader) = (app.clone(), app.clone());
        let uri = format!("/sessions/{id}/bot-step");
        handles.push(tokio::spawn(async move {
            let (status, _) = call(&writer, "POST", &uri, Some(json!({"mode": "sample"}))).await;
            status
        }));
        let uri = format!("/sessions/{id}/posterior");
        handles.push(tokio::spawn(async move { call(&reader, "GET", &uri, None).await.0 }));
    }
    for h in handles {
        let status = h.await.unwrap();
        assert!(matches!(status.as_u16(), 200 | 409 | 410));
    }
    let log = log_of(&app, &id).await;
    for w in log.records.windows(2) {
        assert_eq!(w[1].tick, w[0].tick + 1);
    }
    let world = replay(&log).unwrap();
    assert_eq!(world.tick, state(&app, &id).await.tick);
}

#[tokio::test]
async fn static_assets_only_when_configured() {
    let (status, _) = call(&app(), "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let dir = std::env::temp_dir().join(format!("bayes-arena-ui-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<html>board</html>").unwrap();
    let with_ui = router(AppState::default(), Some(dir.clone()));
    let (status, body) = call(&with_ui, "GET", "/index.html", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>board</html>");
    let (status, _) = call(&with_ui, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[tokio::test]
async fn occupied_port_fails_to_bind() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let err = serve(ServeConfig::local(port)).await.unwrap_err();
    assert!(matches!(err, ServeError::BindFailure { .. }), "{err}");
}
