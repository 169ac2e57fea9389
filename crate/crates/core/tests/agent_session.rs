use std::path::{Path, PathBuf};
use std::sync::Arc;

use radioplan::agent::registry::{CREATE_ENVIRONMENT, CREATE_SIMULATION_AREA, GENERATE_RADIO_MAP, IMPORT_OSM, OPTIMIZE_NETWORK};
use radioplan::agent::{AgentSession, EventKind, MockBackend, Outcome, SessionOptions, TaskStatus, ToolEnv};
use radioplan::geodata::FixtureTransport;
use radioplan::project::{ArtifactKind, ProjectDir, SessionId, TRANSCRIPT_FILE};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn tools() -> Arc<ToolEnv> {
    let transport = FixtureTransport::from_dir(fixtures().join("osm")).unwrap();
    Arc::new(ToolEnv::new(Arc::new(transport)))
}

fn mock() -> Box<MockBackend> {
    Box::new(MockBackend::from_file(&fixtures().join("mock/scripted_session.json")).unwrap())
}

fn session(root: &Path, default_area: Option<&str>) -> AgentSession {
    let project = ProjectDir::open(root).unwrap();
    let options = SessionOptions { default_area: default_area.map(str::to_string), ..SessionOptions::default() };
    AgentSession::create(project, SessionId::numbered(1), mock(), tools(), options).unwrap()
}

fn tools_of(r: &radioplan::agent::AgentResponse) -> Vec<&str> {
    r.tasks.iter().map(|t| t.tool.as_str()).collect()
}

const PAPER_PROMPTS: [&str; 4] =
    ["Import osm file of HITSZ", "Create outdoor environment", "Radio Map Generation", "Network Optimization"];

#[test]
fn four_prompt_session_yields_plan_and_two_maps() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), None);
    let expected: [&[&str]; 4] = [
        &[IMPORT_OSM],
        &[CREATE_ENVIRONMENT, CREATE_SIMULATION_AREA],
        &[GENERATE_RADIO_MAP],
        &[OPTIMIZE_NETWORK, GENERATE_RADIO_MAP],
    ];
    for (prompt, tools) in PAPER_PROMPTS.iter().zip(expected) {
        let r = s.step(prompt).unwrap();
        assert_eq!(r.outcome, Outcome::Completed, "{prompt}: {}", r.message);
        assert_eq!(tools_of(&r), tools);
        assert!(s.memory().short_term().is_empty());
    }
    let arts = s.artifacts();
    assert_eq!(arts.iter().filter(|a| a.kind == ArtifactKind::PlanJson).count(), 1);
    assert_eq!(arts.iter().filter(|a| a.kind == ArtifactKind::RadioMapJson).count(), 2);
    for a in &arts {
        assert!(dir.path().join(&a.path).is_file(), "{}", a.path);
    }
    assert!(arts.iter().any(|a| a.kind == ArtifactKind::Scene && a.path.starts_with("scenes/s0001/")));
    assert!(arts.iter().any(|a| a.kind == ArtifactKind::PlanJson && a.path.starts_with("plans/s0001/")));
}

#[test]
fn repeated_prompt_reuses_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), None);
    for p in &PAPER_PROMPTS[..3] {
        s.step(p).unwrap();
    }
    let before = s.invocations().clone();
    let r = s.step("Radio Map Generation").unwrap();
    assert_eq!(r.outcome, Outcome::Reused);
    assert!(r.tasks.is_empty());
    assert_eq!(s.invocations(), &before);
    assert!(r.cited.iter().any(|a| a.kind == ArtifactKind::RadioMapPng));
    assert!(r.message.contains("Already available"));
}

#[test]
fn fresh_session_plans_full_closure() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), Some("HITSZ"));
    let r = s.step("Radio Map Generation").unwrap();
    assert_eq!(tools_of(&r), [IMPORT_OSM, CREATE_ENVIRONMENT, CREATE_SIMULATION_AREA, GENERATE_RADIO_MAP]);

    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), Some("HITSZ"));
    let r = s.step("Network Optimization").unwrap();
    assert_eq!(
        tools_of(&r),
        [IMPORT_OSM, CREATE_ENVIRONMENT, CREATE_SIMULATION_AREA, GENERATE_RADIO_MAP, OPTIMIZE_NETWORK, GENERATE_RADIO_MAP]
    );
    assert_eq!(r.outcome, Outcome::Completed);
}

#[test]
fn missing_area_is_rejected_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), None);
    let r = s.step("Radio Map Generation").unwrap();
    assert_eq!(r.outcome, Outcome::Rejected);
    assert!(s.memory().long_term().is_empty());
    assert!(s.invocations().is_empty());
}

#[test]
fn prose_reply_asks_for_clarification() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), None);
    let r = s.step("Hello there").unwrap();
    assert_eq!(r.outcome, Outcome::Clarification);
    assert!(r.message.contains("HITSZ"));
    assert!(s.memory().long_term().is_empty());
    assert!(s.memory().short_term().is_empty());
}

#[test]
fn bad_arguments_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), Some("HITSZ"));
    let r = s.step("Broken call").unwrap();
    assert_eq!(r.outcome, Outcome::Rejected);
    assert!(r.message.contains("stations"), "{}", r.message);
}

#[test]
fn unmatched_prompt_is_a_backend_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), None);
    assert!(s.step("Something the fixture never saw").is_err());
    assert!(s.memory().short_term().is_empty());
}

#[test]
fn failed_prerequisite_aborts_dependents() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), Some("Atlantis"));
    let r = s.step("Radio Map Generation").unwrap();
    assert_eq!(r.outcome, Outcome::Failed);
    let statuses: Vec<TaskStatus> = r.tasks.iter().map(|t| t.status).collect();
    assert_eq!(statuses, [TaskStatus::Failed, TaskStatus::Aborted, TaskStatus::Aborted, TaskStatus::Aborted]);
    assert_eq!(s.invocations().values().sum::<usize>(), 1);
    assert!(r.tasks[0].error.as_deref().unwrap().contains("Atlantis"));
}

#[test]
fn events_are_ordered_and_progress_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), Some("HITSZ"));
    let (tx, rx) = std::sync::mpsc::channel();
    s.set_event_sink(Box::new(move |e| tx.send(e.clone()).unwrap()));
    s.step("Radio Map Generation").unwrap();
    let events: Vec<_> = rx.try_iter().collect();
    assert!(events.windows(2).all(|w| w[0].seq < w[1].seq));
    assert!(matches!(events.first().unwrap().kind, EventKind::TurnStarted { .. }));
    assert!(matches!(events.last().unwrap().kind, EventKind::TurnFinished { outcome: Outcome::Completed, .. }));
    let mut last = std::collections::BTreeMap::new();
    for e in &events {
        if let EventKind::TaskProgress { task, percent } = e.kind {
            let prev = last.insert(task, percent).unwrap_or(-1.0);
            assert!(percent >= prev);
        }
    }
    let finished = events.iter().filter(|e| matches!(e.kind, EventKind::TaskFinished { .. })).count();
    assert_eq!(finished, 4);
}

#[test]
fn reopened_session_keeps_memory_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = session(dir.path(), None);
    for p in &PAPER_PROMPTS[..3] {
        s.step(p).unwrap();
    }
    let listing = s.artifacts();
    drop(s);
    let project = ProjectDir::open(dir.path()).unwrap();
    let mut s = AgentSession::open(project, SessionId::numbered(1), mock(), tools()).unwrap();
    assert!(!s.is_degraded());
    assert_eq!(s.artifacts(), listing);
    let r = s.step("Radio Map Generation").unwrap();
    assert_eq!(r.outcome, Outcome::Reused);
    let r = s.step("Network Optimization").unwrap();
    assert_eq!(tools_of(&r), [OPTIMIZE_NETWORK, GENERATE_RADIO_MAP]);
    let ids: Vec<_> = s.artifacts().into_iter().map(|a| a.id).collect();
    let mut unique = ids.clone();
    unique.dedup();
    assert_eq!(ids, unique);
}

#[test]
fn truncated_transcript_line_degrades_only_that_session() {
    let dir = tempfile::tempdir().unwrap();
    let project = ProjectDir::open(dir.path()).unwrap();
    for n in 1..=2 {
        let mut s = AgentSession::create(project.clone(), SessionId::numbered(n), mock(), tools(), SessionOptions::default())
            .unwrap();
        s.step("Import osm file of HITSZ").unwrap();
        s.step("Create outdoor environment").unwrap();
    }
    let path = project.session_dir(&SessionId::numbered(1)).join(TRANSCRIPT_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.len() - 40;
    std::fs::write(&path, &text[..cut]).unwrap();

    let s1 = AgentSession::open(project.clone(), SessionId::numbered(1), mock(), tools()).unwrap();
    let s2 = AgentSession::open(project, SessionId::numbered(2), mock(), tools()).unwrap();
    assert!(s1.is_degraded());
    assert_eq!(s1.memory().long_term().len(), 2);
    assert!(!s2.is_degraded());
    assert_eq!(s2.memory().long_term().len(), 3);
}

#[test]
fn mock_sessions_are_byte_identical() {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut s = session(dir.path(), None);
        for p in PAPER_PROMPTS {
            s.step(p).unwrap();
        }
        let transcript = std::fs::read(dir.path().join("sessions/s0001").join(TRANSCRIPT_FILE)).unwrap();
        let files: Vec<Vec<u8>> = s.artifacts().iter().map(|a| std::fs::read(dir.path().join(&a.path)).unwrap()).collect();
        (transcript, files)
    };
    assert_eq!(run(), run());
}
