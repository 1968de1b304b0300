use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use trustconv_core::dialog::{DialogPhase, Ending, Speaker, Turn, CLOSING_MESSAGE};
use trustconv_core::pipeline::{run_pipeline, PipelineConfig};
use trustconv_core::prompt_gen::PromptSet;
use trustconv_core::service::{ServiceError, SessionStore, DEFAULT_PROMPT_SET_ID};
use trustconv_core::valence::ValenceLexicon;

fn prompt_set() -> PromptSet {
    static SET: OnceLock<PromptSet> = OnceLock::new();
    SET.get_or_init(|| run_pipeline(&PipelineConfig::default()).unwrap().prompt_set)
        .clone()
}

fn open(root: &Path) -> SessionStore {
    SessionStore::with_defaults(root, prompt_set()).unwrap()
}

fn open_with_turns(root: &Path, max_turns: usize) -> SessionStore {
    SessionStore::open(
        root,
        BTreeMap::from([(DEFAULT_PROMPT_SET_ID.to_string(), prompt_set())]),
        ValenceLexicon::bundled(),
        max_turns,
    )
    .unwrap()
}

fn session_file(root: &Path, id: &str) -> std::path::PathBuf {
    root.join("sessions").join(format!("{id}.jsonl"))
}

fn alternates(turns: &[Turn]) -> bool {
    turns
        .iter()
        .enumerate()
        .all(|(i, t)| t.index == i && (t.speaker == Speaker::Agent) == (i % 2 == 0))
}

#[test]
fn create_and_converse() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let s = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap();
    assert_eq!(s.session_id.len(), 32);
    assert_eq!(s.phase, DialogPhase::Opening);
    assert_eq!(s.opening, prompt_set().opening().text);

    let reply = store
        .post_message(&s.session_id, "I don't really like it", None)
        .unwrap();
    assert_eq!(reply.agent_reply, "Can you explain what makes you dislike it?");
    assert_eq!(reply.phase, DialogPhase::OpeningFollowUp);
    assert!(!reply.session_complete);

    let turns = store.get_transcript(&s.session_id).unwrap();
    assert_eq!(turns.len(), 3);
    assert!(alternates(&turns));
    let indicators = store.get_indicators(&s.session_id).unwrap();
    assert_eq!(indicators.turn_count, 1);
    assert_eq!(indicators.followup_count, 1);
}

#[test]
fn unknown_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    assert!(matches!(
        store.create_session("nope"),
        Err(ServiceError::UnknownPromptSet(_))
    ));
    assert!(matches!(
        store.post_message("missing", "hi", None),
        Err(ServiceError::UnknownSession(_))
    ));
    assert!(matches!(
        store.get_transcript("missing"),
        Err(ServiceError::UnknownSession(_))
    ));
}

#[test]
fn idempotent_retry_returns_the_same_reply() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
    let first = store.post_message(&id, "It works well.", Some("k1")).unwrap();
    let retry = store.post_message(&id, "It works well.", Some("k1")).unwrap();
    assert_eq!(first, retry);
    assert_eq!(store.get_transcript(&id).unwrap().len(), 3);

    // Keys survive a restart.
    drop(store);
    let store = open(dir.path());
    assert_eq!(store.post_message(&id, "It works well.", Some("k1")).unwrap(), first);
    assert_eq!(store.get_transcript(&id).unwrap().len(), 3);
    store.post_message(&id, "Something else.", Some("k2")).unwrap();
    assert_eq!(store.get_transcript(&id).unwrap().len(), 5);
}

#[test]
fn closed_sessions_refuse_messages() {
    let dir = tempfile::tempdir().unwrap();
    let store = open_with_turns(dir.path(), 3);
    let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
    let reply = store.post_message(&id, "fine", None).unwrap();
    assert!(reply.session_complete);
    assert_eq!(reply.agent_reply, CLOSING_MESSAGE);
    assert_eq!(reply.phase, DialogPhase::Closed);
    assert!(matches!(
        store.post_message(&id, "more", None),
        Err(ServiceError::SessionClosed)
    ));
    assert_eq!(store.get_indicators(&id).unwrap().ending, Ending::TurnLimited);

    drop(store);
    let store = open_with_turns(dir.path(), 3);
    assert_eq!(store.phase(&id).unwrap(), DialogPhase::Closed);
    assert!(matches!(
        store.post_message(&id, "more", None),
        Err(ServiceError::SessionClosed)
    ));
}

#[test]
fn reopen_restores_every_phase() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let mut expected = Vec::new();
    for depth in 0..6 {
        let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
        for step in 0..depth {
            let text = if step % 2 == 0 {
                "I don't really like it"
            } else {
                "It is dependable."
            };
            store.post_message(&id, text, None).unwrap();
        }
        expected.push((
            id.clone(),
            store.phase(&id).unwrap(),
            store.get_transcript(&id).unwrap(),
        ));
    }
    drop(store);
    let store = open(dir.path());
    assert_eq!(store.session_ids().len(), expected.len());
    for (id, phase, turns) in expected {
        assert_eq!(store.phase(&id).unwrap(), phase);
        assert_eq!(store.get_transcript(&id).unwrap(), turns);
    }
}

#[test]
fn torn_tail_is_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
    store.post_message(&id, "It is dependable.", None).unwrap();
    let turns = store.get_transcript(&id).unwrap();
    drop(store);

    let path = session_file(dir.path(), &id);
    let intact = fs::read_to_string(&path).unwrap();
    fs::write(&path, format!("{intact}{{\"session_id\":\"{id}\",\"ind")).unwrap();
    let store = open(dir.path());
    assert_eq!(store.get_transcript(&id).unwrap(), turns);
    assert_eq!(fs::read_to_string(&path).unwrap(), intact);
    store.post_message(&id, "Still fine.", None).unwrap();
    assert!(alternates(&store.get_transcript(&id).unwrap()));
}

#[test]
fn unanswered_respondent_record_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
    store.post_message(&id, "I don't really like it", None).unwrap();
    let before = store.get_transcript(&id).unwrap();
    drop(store);

    // Keep the respondent line of the last exchange but lose the agent line.
    let path = session_file(dir.path(), &id);
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    fs::write(&path, format!("{}\n", lines[..2].join("\n"))).unwrap();
    let store = open(dir.path());
    assert_eq!(store.get_transcript(&id).unwrap(), before[..1]);
    assert_eq!(store.phase(&id).unwrap(), DialogPhase::Opening);
}

#[test]
fn corrupt_records_fail_startup() {
    let dir = tempfile::tempdir().unwrap();
    let store = open(dir.path());
    let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
    store.post_message(&id, "ok", None).unwrap();
    drop(store);
    let path = session_file(dir.path(), &id);
    let text = fs::read_to_string(&path)
        .unwrap()
        .replacen("\"index\":1", "\"index\":7", 1);
    fs::write(&path, text).unwrap();
    let err = SessionStore::with_defaults(dir.path(), prompt_set()).err().unwrap();
    assert!(matches!(err, ServiceError::Corrupt { .. }), "{err}");
}

#[test]
fn changed_prompt_set_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    drop(open(dir.path()));
    let mut changed = prompt_set();
    changed.conceptual.pop();
    changed.concept_slots.pop();
    let err = SessionStore::with_defaults(dir.path(), changed).err().unwrap();
    assert!(matches!(err, ServiceError::PromptSetChanged(_)), "{err}");
}

#[test]
fn concurrent_sessions_do_not_interleave() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(open(dir.path()));
    let handles: Vec<_> = (0..8)
        .map(|c| {
            let store = store.clone();
            std::thread::spawn(move || {
                let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
                for step in 0..6 {
                    match store.post_message(&id, &format!("client {c} step {step}"), None) {
                        Ok(_) | Err(ServiceError::SessionClosed) => {}
                        Err(e) => panic!("{e}"),
                    }
                }
                id
            })
        })
        .collect();
    let ids: Vec<String> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for (c, id) in ids.iter().enumerate() {
        let turns = store.get_transcript(id).unwrap();
        assert!(alternates(&turns));
        for t in turns.iter().filter(|t| t.speaker == Speaker::Respondent) {
            assert!(t.text.starts_with(&format!("client {c} ")), "{}", t.text);
        }
    }
}

#[test]
fn same_session_posts_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(open(dir.path()));
    let id = store.create_session(DEFAULT_PROMPT_SET_ID).unwrap().session_id;
    let handles: Vec<_> = (0..6)
        .map(|c| {
            let (store, id) = (store.clone(), id.clone());
            std::thread::spawn(move || {
                let _ = store.post_message(&id, &format!("writer {c}"), None);
            })
        })
        .collect();
    handles.into_iter().for_each(|h| h.join().unwrap());
    let turns = store.get_transcript(&id).unwrap();
    assert!(alternates(&turns));
    drop(store);
    assert_eq!(open(dir.path()).get_transcript(&id).unwrap(), turns);
}
