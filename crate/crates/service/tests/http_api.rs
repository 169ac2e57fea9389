#![allow(clippy::result_large_err)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use radioplan::agent::BackendConfig;
use radioplan_service::{OsmSource, ServerHandle, ServiceConfig};
use serde_json::{json, Value};

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

fn config(root: &Path) -> ServiceConfig {
    ServiceConfig {
        bind: "127.0.0.1:0".into(),
        project_root: root.to_path_buf(),
        workers: 2,
        backend: Some(BackendConfig::Mock { fixtures: core_fixtures().join("mock/scripted_session.json") }),
        osm: OsmSource::Fixtures { dir: core_fixtures().join("osm") },
        default_area: None,
    }
}

struct Client {
    base: String,
}

impl Client {
    fn get(&self, path: &str) -> Result<ureq::Response, ureq::Error> {
        ureq::get(&format!("{}{path}", self.base)).call()
    }

    fn post(&self, path: &str, body: Value) -> Result<ureq::Response, ureq::Error> {
        ureq::post(&format!("{}{path}", self.base)).send_json(body)
    }

    fn json(&self, path: &str) -> Value {
        self.get(path).unwrap().into_json().unwrap()
    }

    fn status(r: Result<ureq::Response, ureq::Error>) -> u16 {
        match r {
            Ok(r) => r.status(),
            Err(ureq::Error::Status(s, _)) => s,
            Err(e) => panic!("{e}"),
        }
    }

    fn new_session(&self, body: Value) -> String {
        let r = self.post("/api/sessions", body).unwrap();
        assert_eq!(r.status(), 201);
        r.into_json::<Value>().unwrap()["session_id"].as_str().unwrap().to_string()
    }

    /// Submits a prompt and long-polls until its turn finishes; returns the
    /// events of the turn.
    fn run_prompt(&self, sid: &str, text: &str) -> Vec<Value> {
        let cursor = self.json(&format!("/api/sessions/{sid}"))["last_event"].as_u64().unwrap();
        let r = self.post(&format!("/api/sessions/{sid}/prompts"), json!({ "text": text })).unwrap();
        assert_eq!(r.status(), 202);
        self.wait_turn(sid, cursor)
    }

    fn wait_turn(&self, sid: &str, mut cursor: u64) -> Vec<Value> {
        let started = Instant::now();
        let mut events = Vec::new();
        while started.elapsed() < Duration::from_secs(120) {
            let page = self.json(&format!("/api/sessions/{sid}/events?since={cursor}&timeout_ms=5000"));
            cursor = page["next"].as_u64().unwrap();
            for e in page["events"].as_array().unwrap() {
                events.push(e.clone());
                if e["kind"] == "turn_finished" {
                    return events;
                }
            }
        }
        panic!("turn did not finish");
    }
}

const PROMPTS: [&str; 4] =
    ["Import osm file of HITSZ", "Create outdoor environment", "Radio Map Generation", "Network Optimization"];

#[test]
fn health_reports_version() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    let h = c.json("/api/health");
    assert_eq!(h["status"], "ok");
    assert_eq!(h["version"], env!("CARGO_PKG_VERSION"));
    for sub in ["cache/osm", "scenes", "plans", "sessions", "artifacts"] {
        assert!(dir.path().join(sub).is_dir(), "{sub}");
    }
}

#[test]
fn scripted_session_over_http_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    let sid = c.new_session(json!({}));
    for p in PROMPTS {
        let events = c.run_prompt(&sid, p);
        assert_eq!(events.last().unwrap()["outcome"], "completed", "{p}: {events:?}");
    }
    let listing = c.json(&format!("/api/sessions/{sid}/artifacts"));
    let arts = listing.as_array().unwrap();
    let count = |kind: &str| arts.iter().filter(|a| a["kind"] == kind).count();
    assert!(arts.len() >= 3);
    assert_eq!(count("radio_map_json"), 2);
    assert_eq!(count("plan_json"), 1);
    for a in arts {
        let r = c.get(&format!("/api/sessions/{sid}/artifacts/{}", a["id"].as_str().unwrap())).unwrap();
        let ctype = r.content_type().to_string();
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut r.into_reader(), &mut bytes).unwrap();
        if a["kind"].as_str().unwrap().ends_with("png") {
            assert_eq!(ctype, "image/png");
            assert_eq!(&bytes[..4], b"\x89PNG");
        } else if a["kind"] != "osm" {
            assert_eq!(ctype, "application/json");
            serde_json::from_slice::<Value>(&bytes).unwrap();
        }
    }

    // Every job reached a terminal state with full progress.
    let jobs = c.json(&format!("/api/sessions/{sid}/jobs"));
    assert_eq!(jobs.as_array().unwrap().len(), 6);
    assert!(jobs.as_array().unwrap().iter().all(|j| j["state"] == "succeeded" && j["percent"] == 100.0));

    let all = c.json(&format!("/api/sessions/{sid}/events?since=0"));
    server.stop();

    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    assert_eq!(c.json("/api/sessions"), json!([{ "id": sid }]));
    assert_eq!(c.json(&format!("/api/sessions/{sid}/artifacts")), listing);
    assert_eq!(c.json(&format!("/api/sessions/{sid}/events?since=0")), all);

    // The restarted session continues numbering and still reuses results.
    let events = c.run_prompt(&sid, "Radio Map Generation");
    assert_eq!(events.last().unwrap()["outcome"], "reused");
    let last_before = all["next"].as_u64().unwrap();
    assert_eq!(events[0]["seq"].as_u64().unwrap(), last_before + 1);
}

#[test]
fn cursor_replay_is_gapless() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    let sid = c.new_session(json!({ "default_area": "HITSZ" }));
    c.run_prompt(&sid, "Radio Map Generation");

    let full: Vec<Value> = c.json(&format!("/api/sessions/{sid}/events?since=0"))["events"].as_array().unwrap().clone();
    let seqs: Vec<u64> = full.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    // Resuming from any cursor replays exactly the missed suffix.
    for cut in [0, 1, seqs.len() / 2, seqs.len()] {
        let page = c.json(&format!("/api/sessions/{sid}/events?since={cut}"));
        assert_eq!(page["events"].as_array().unwrap()[..], full[cut..]);
    }
    let kinds: Vec<&str> = full.iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.first(), Some(&"turn_started"));
    assert_eq!(kinds.iter().filter(|k| **k == "task_finished").count(), 4);
}

#[test]
fn prompt_mid_turn_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    let sid = c.new_session(json!({ "default_area": "HITSZ" }));
    let r = c.post(&format!("/api/sessions/{sid}/prompts"), json!({ "text": "Network Optimization" })).unwrap();
    assert_eq!(r.status(), 202);
    let accepted: Value = r.into_json().unwrap();
    assert_eq!(accepted["job_ids"].as_array().unwrap().len(), 6);
    let again = c.post(&format!("/api/sessions/{sid}/prompts"), json!({ "text": "Radio Map Generation" }));
    assert_eq!(Client::status(again), 409);
    let events = c.wait_turn(&sid, 0);
    assert_eq!(events.last().unwrap()["outcome"], "completed");
}

#[test]
fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    assert_eq!(Client::status(c.get("/api/sessions/s9999/artifacts")), 404);
    assert_eq!(Client::status(c.get("/api/sessions/..%2Fetc/artifacts")), 404);
    let sid = c.new_session(json!({}));
    let bad = ureq::post(&format!("{}/api/sessions/{sid}/prompts", c.base)).send_string("{not json");
    assert_eq!(Client::status(bad), 400);
    assert_eq!(Client::status(c.post(&format!("/api/sessions/{sid}/prompts"), json!({ "text": "  " }))), 400);
    assert_eq!(Client::status(c.post("/api/sessions", json!({ "colour": "blue" }))), 400);
    let bad_profile = json!({ "profile": { "output_format_spec": "no sample here" } });
    assert_eq!(Client::status(c.post("/api/sessions", bad_profile)), 400);
    assert_eq!(Client::status(c.get(&format!("/api/sessions/{sid}/artifacts/a0042"))), 404);

    c.run_prompt(&sid, "Import osm file of HITSZ");
    let arts = c.json(&format!("/api/sessions/{sid}/artifacts"));
    let a = &arts[0];
    std::fs::remove_file(dir.path().join(a["path"].as_str().unwrap())).unwrap();
    assert_eq!(Client::status(c.get(&format!("/api/sessions/{sid}/artifacts/{}", a["id"].as_str().unwrap()))), 410);

    // A clarification answers immediately with the model's text.
    let r: Value = c.post(&format!("/api/sessions/{sid}/prompts"), json!({ "text": "Hello" })).unwrap().into_json().unwrap();
    assert_eq!(r["outcome"], "clarification");
    assert!(r["job_ids"].as_array().unwrap().is_empty());
}

#[test]
fn corrupted_transcript_flags_only_that_session() {
    let dir = tempfile::tempdir().unwrap();
    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    let a = c.new_session(json!({}));
    let b = c.new_session(json!({}));
    for sid in [&a, &b] {
        c.run_prompt(sid, "Import osm file of HITSZ");
        c.run_prompt(sid, "Create outdoor environment");
    }
    server.stop();
    let path = dir.path().join("sessions").join(&a).join("transcript.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() - 25]).unwrap();

    let server = ServerHandle::start(config(dir.path())).unwrap();
    let c = Client { base: server.url() };
    assert_eq!(c.json(&format!("/api/sessions/{a}"))["degraded"], true);
    assert_eq!(c.json(&format!("/api/sessions/{b}"))["degraded"], false);
    let events = c.run_prompt(&b, "Radio Map Generation");
    assert_eq!(events.last().unwrap()["outcome"], "completed");
}

#[test]
fn unwritable_root_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("not-a-dir");
    std::fs::write(&file, b"x").unwrap();
    assert!(ServerHandle::start(config(&file)).is_err());
}
