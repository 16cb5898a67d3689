use std::collections::BTreeSet;
use std::sync::Arc;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use schemamem_core::clock::ManualClock;
use schemamem_core::eval::{self, EvalError, GenConfig, SyntheticSuite};
use schemamem_core::fixtures;
use schemamem_core::provider::LexicalProvider;
use schemamem_core::{Engine, IngestRequest};
use schemamem_service::api::{spawn, ServerHandle, REQUEST_ID, ROUTES};
use schemamem_service::HttpTarget;

fn suite(seed: u64) -> SyntheticSuite {
    let config = GenConfig {
        n_records: 40,
        n_questions: 10,
        ..GenConfig::default()
    };
    eval::generate(seed, &config).unwrap()
}

fn server(suite: &SyntheticSuite) -> (Arc<Engine>, ServerHandle) {
    let provider = Arc::new(LexicalProvider::new(suite.rules.clone()).unwrap());
    let engine = Arc::new(Engine::in_memory(provider, Arc::new(ManualClock::new(suite.now))));
    let handle = spawn(Arc::clone(&engine), "127.0.0.1:0").unwrap();
    (engine, handle)
}

fn turn_request(t: &schemamem_core::eval::Turn) -> IngestRequest {
    IngestRequest {
        received_at: Some(t.at),
        source_tag: t.speaker.clone(),
        ..IngestRequest::new(t.text.clone())
    }
}

#[test]
fn health_init_and_conflicting_init() {
    let s = suite(1);
    let (_engine, srv) = server(&s);
    let c = Client::new();
    let health: Value = c.get(format!("{}/v1/health", srv.url())).send().unwrap().json().unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["buckets"], 0);

    let first = c.post(format!("{}/v1/init", srv.url())).json(&s.goal).send().unwrap();
    assert_eq!(first.status(), StatusCode::CREATED);
    let layout: Value = first.json().unwrap();
    assert_eq!(layout["buckets"].as_array().unwrap().len(), s.goal.buckets.len());

    let again = c.post(format!("{}/v1/init", srv.url())).json(&s.goal).send().unwrap();
    assert_eq!(again.status(), StatusCode::CONFLICT);
    let body: Value = again.json().unwrap();
    assert_eq!(body["code"], "NonEmptyStore");

    let buckets: Value = c.get(format!("{}/v1/buckets", srv.url())).send().unwrap().json().unwrap();
    assert_eq!(buckets.as_array().unwrap().len(), s.goal.buckets.len());
}

#[test]
fn ingest_then_query_and_fetch_records() {
    let s = suite(2);
    let (_engine, srv) = server(&s);
    let c = Client::new();
    c.post(format!("{}/v1/init", srv.url())).json(&s.goal).send().unwrap();
    let mut record_ids = Vec::new();
    for t in &s.dialogue {
        let resp = c.post(format!("{}/v1/experiences", srv.url())).json(&turn_request(t)).send().unwrap();
        assert_eq!(resp.status(), StatusCode::OK);
        let report: Value = resp.json().unwrap();
        for seg in report["per_segment"].as_array().unwrap() {
            record_ids.push(seg["record"].as_str().unwrap().to_string());
        }
    }
    assert!(!record_ids.is_empty());
    let rec: Value = c.get(format!("{}/v1/records/{}", srv.url(), record_ids[0])).send().unwrap().json().unwrap();
    assert_eq!(rec["record"]["id"], record_ids[0].as_str());

    let bucket = &s.goal.buckets[1].name;
    let q = format!("FROM \"{bucket}\" SELECT COUNT(*)");
    let resp = c.post(format!("{}/v1/query", srv.url())).json(&json!({ "query": q })).send().unwrap();
    assert_eq!(resp.status(), StatusCode::OK, "{q}");

    let buckets: Value = c.get(format!("{}/v1/buckets", srv.url())).send().unwrap().json().unwrap();
    let id = buckets[1]["id"].as_str().unwrap();
    let schemas: Value = c.get(format!("{}/v1/buckets/{id}/schemas", srv.url())).send().unwrap().json().unwrap();
    assert!(!schemas.as_array().unwrap().is_empty());
}

#[test]
fn coffee_sentence_lands_in_the_coffee_bucket() {
    let provider = Arc::new(LexicalProvider::new(fixtures::coffee_rules()).unwrap());
    let engine = Arc::new(Engine::in_memory(provider, Arc::new(ManualClock::new(fixtures::coffee_now()))));
    let srv = spawn(Arc::clone(&engine), "127.0.0.1:0").unwrap();
    let c = Client::new();
    c.post(format!("{}/v1/init", srv.url())).json(&fixtures::coffee_goal()).send().unwrap();
    let report: Value = c
        .post(format!("{}/v1/experiences", srv.url()))
        .json(&json!({ "raw_text": fixtures::COFFEE_SENTENCE }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    // The bucket carries a Drink template, so the sentence grows a
    // `Coffee` element rather than a new schema.
    let segs = report["per_segment"].as_array().unwrap();
    assert_eq!(segs.len(), 1, "{report:#}");
    let seg = &segs[0];
    assert_eq!(seg["path"], "Evolution");
    let rec: Value = c
        .get(format!("{}/v1/records/{}", srv.url(), seg["record"].as_str().unwrap()))
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(rec["label"], "Coffee", "{rec:#}");
    assert_eq!(rec["bucket_name"], "User Events");
    assert_eq!(rec["record"]["active"], true);
}

#[test]
fn error_envelopes() {
    let s = suite(3);
    let (_engine, srv) = server(&s);
    let c = Client::new();

    let resp = c.post(format!("{}/v1/query", srv.url())).json(&json!({ "query": "FROM" })).send().unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let body: Value = resp.json().unwrap();
    assert_eq!(body["code"], "SyntaxError");
    assert_eq!(body["detail"]["position"], 4);

    let resp = c
        .post(format!("{}/v1/answer", srv.url()))
        .header("content-type", "text/plain")
        .body("{\"question\":\"hi\"}")
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let resp = c
        .post(format!("{}/v1/answer", srv.url()))
        .json(&json!({ "question": "hi", "extra": 1 }))
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(resp.json::<Value>().unwrap()["code"], "InvalidRequest");

    let resp = c.get(format!("{}/v1/records/rec_999999", srv.url())).send().unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
    assert_eq!(resp.json::<Value>().unwrap()["code"], "NotFound");

    let resp = c.get(format!("{}/v1/nothing", srv.url())).send().unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[test]
fn every_route_is_mounted() {
    let s = suite(4);
    let (_engine, srv) = server(&s);
    let c = Client::new();
    for r in ROUTES {
        let path = r.path.replace("{id}", "x");
        let url = format!("{}{path}", srv.url());
        let resp = match r.method {
            "GET" => c.get(url).send().unwrap(),
            "POST" => c.post(url).json(&json!({})).send().unwrap(),
            m => panic!("unexpected method {m}"),
        };
        // A mounted route answers with its own error envelope, never the
        // fallback; 405 would mean the method table drifted.
        assert_ne!(resp.status(), StatusCode::METHOD_NOT_ALLOWED, "{} {}", r.method, r.path);
        let body: Value = resp.json().unwrap_or(Value::Null);
        assert_ne!(body["message"], "no such endpoint", "{} {}", r.method, r.path);
    }
    let names: BTreeSet<_> = ROUTES.iter().map(|r| r.name).collect();
    assert_eq!(names.len(), ROUTES.len());
}

#[test]
fn request_ids_are_echoed_under_concurrency() {
    let s = suite(5);
    let (engine, srv) = server(&s);
    let c = Client::new();
    c.post(format!("{}/v1/init", srv.url())).json(&s.goal).send().unwrap();
    let url = srv.url();
    let turns = s.dialogue.clone();
    let threads: Vec<_> = (0..8)
        .map(|w| {
            let url = url.clone();
            let turns = turns.clone();
            std::thread::spawn(move || {
                let c = Client::new();
                let mut seen = Vec::new();
                for (i, t) in turns.iter().enumerate().filter(|(i, _)| i % 8 == w) {
                    let rid = format!("w{w}-{i}");
                    let resp = c
                        .post(format!("{url}/v1/experiences"))
                        .header(REQUEST_ID, &rid)
                        .json(&turn_request(t))
                        .send()
                        .unwrap();
                    assert_eq!(resp.headers()[REQUEST_ID].to_str().unwrap(), rid);
                    assert_eq!(resp.status(), StatusCode::OK);
                    let report: Value = resp.json().unwrap();
                    seen.push(report["experience_id"].as_str().unwrap().to_string());
                }
                seen
            })
        })
        .collect();
    let ids: Vec<String> = threads.into_iter().flat_map(|t| t.join().unwrap()).collect();
    let unique: BTreeSet<_> = ids.iter().collect();
    assert_eq!(ids.len(), s.dialogue.len());
    assert_eq!(unique.len(), ids.len(), "duplicated experience ids");
    assert_eq!(engine.health().experiences, s.dialogue.len());

    let resp = c.get(format!("{url}/v1/health")).send().unwrap();
    assert!(resp.headers()[REQUEST_ID].to_str().unwrap().starts_with("req-"));
}

#[test]
fn remote_eval_matches_in_process_eval() {
    let s = suite(6);
    let (_engine, srv) = server(&s);
    let remote = eval::run(&s, &mut HttpTarget::new(&srv.url()).unwrap()).unwrap();
    let local = eval::run(&s, &mut eval::EngineTarget::default()).unwrap();
    assert_eq!(remote.overall, local.overall);
    assert_eq!(remote.overall.accuracy, 1.0);
}

#[test]
fn unreachable_endpoint_is_reported() {
    let s = suite(7);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = eval::run(&s, &mut HttpTarget::new(&format!("http://127.0.0.1:{port}")).unwrap()).unwrap_err();
    assert!(matches!(err, EvalError::EngineUnreachable(_)), "{err:?}");
}
