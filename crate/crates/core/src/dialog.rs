//! The conversational survey state machine. A session opens with the
//! declarative prompt, probes negative or unclear replies with an
//! interpretive follow-up, walks every concept slot, asks one descriptive
//! question and closes. Transcripts are append-only and fully replayable.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::prompt_gen::{Prompt, PromptSet, Provenance};
use crate::textprep::tokenize;
use crate::valence::ValenceLexicon;

pub const CLOSING_MESSAGE: &str = "Thank you for sharing your thoughts. This concludes our conversation.";
pub const DEFAULT_MAX_TURNS: usize = 30;
/// Tokens before a valenced word searched for a negation.
pub const NEGATION_WINDOW: usize = 3;
/// Follow-ups allowed per phase.
pub const FOLLOWUP_BUDGET: usize = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DialogError {
    #[error("session is closed")]
    SessionClosed,
    #[error("max_turns must be at least 3, got {0}")]
    InvalidMaxTurns(usize),
    #[error("transcript does not replay at turn {index}: {message}")]
    ReplayMismatch { index: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntentLabel {
    Positive,
    Negative,
    Unclear,
}

impl fmt::Display for IntentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Positive => "positive",
            Self::Negative => "negative",
            Self::Unclear => "unclear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub label: IntentLabel,
    pub score: i32,
}

impl Intent {
    pub fn from_score(score: i32) -> Self {
        let label = match score.signum() {
            1 => IntentLabel::Positive,
            -1 => IntentLabel::Negative,
            _ => IntentLabel::Unclear,
        };
        Self { label, score }
    }
}

/// Lexicon tally: each valenced token counts ±1, flipped once when a
/// negation occurs among the [`NEGATION_WINDOW`] tokens before it.
pub fn classify_intent(utterance: &str, lexicon: &ValenceLexicon) -> Intent {
    let tokens = tokenize(utterance);
    let score = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let polarity = lexicon.polarity(&t.stem);
            let negated = tokens[i.saturating_sub(NEGATION_WINDOW)..i]
                .iter()
                .any(|p| lexicon.is_negation(&p.surface));
            if negated {
                -polarity
            } else {
                polarity
            }
        })
        .sum();
    Intent::from_score(score)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DialogPhase {
    Opening,
    OpeningFollowUp,
    Conceptual(usize),
    ConceptualFollowUp(usize),
    Descriptive,
    Closed,
}

impl DialogPhase {
    /// Position along the phase order; transitions never decrease it.
    pub fn order_key(self) -> (u8, usize, u8) {
        match self {
            Self::Opening => (0, 0, 0),
            Self::OpeningFollowUp => (1, 0, 0),
            Self::Conceptual(i) => (2, i, 0),
            Self::ConceptualFollowUp(i) => (2, i, 1),
            Self::Descriptive => (3, 0, 0),
            Self::Closed => (4, 0, 0),
        }
    }
}

impl PartialOrd for DialogPhase {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for DialogPhase {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

impl fmt::Display for DialogPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Opening => f.write_str("opening"),
            Self::OpeningFollowUp => f.write_str("opening_follow_up"),
            Self::Conceptual(i) => write!(f, "conceptual:{i}"),
            Self::ConceptualFollowUp(i) => write!(f, "conceptual_follow_up:{i}"),
            Self::Descriptive => f.write_str("descriptive"),
            Self::Closed => f.write_str("closed"),
        }
    }
}

impl FromStr for DialogPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let slot = |rest: &str| {
            rest.parse::<usize>()
                .map_err(|_| format!("bad slot index in phase `{s}`"))
        };
        match s {
            "opening" => Ok(Self::Opening),
            "opening_follow_up" => Ok(Self::OpeningFollowUp),
            "descriptive" => Ok(Self::Descriptive),
            "closed" => Ok(Self::Closed),
            _ => {
                if let Some(rest) = s.strip_prefix("conceptual_follow_up:") {
                    Ok(Self::ConceptualFollowUp(slot(rest)?))
                } else if let Some(rest) = s.strip_prefix("conceptual:") {
                    Ok(Self::Conceptual(slot(rest)?))
                } else {
                    Err(format!("unknown phase `{s}`"))
                }
            }
        }
    }
}

impl Serialize for DialogPhase {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DialogPhase {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Agent,
    Respondent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ending {
    Completed,
    Abandoned,
    TurnLimited,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    /// For respondent turns, the phase the reply answered; for agent turns,
    /// the phase the prompt opens.
    pub phase: DialogPhase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<Intent>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

pub fn now_millis() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct DialogSession {
    pub session_id: String,
    prompt_set: Arc<PromptSet>,
    lexicon: Arc<ValenceLexicon>,
    phase: DialogPhase,
    transcript: Vec<Turn>,
    followups_used: BTreeMap<DialogPhase, usize>,
    max_turns: usize,
    ending: Option<Ending>,
}

impl DialogSession {
    /// Opens a session; the declarative opening becomes turn 0.
    pub fn new(
        session_id: impl Into<String>,
        prompt_set: Arc<PromptSet>,
        lexicon: Arc<ValenceLexicon>,
        max_turns: usize,
        now: u64,
    ) -> Result<Self, DialogError> {
        if max_turns < 3 {
            return Err(DialogError::InvalidMaxTurns(max_turns));
        }
        let mut session = Self {
            session_id: session_id.into(),
            prompt_set,
            lexicon,
            phase: DialogPhase::Opening,
            transcript: Vec::new(),
            followups_used: BTreeMap::new(),
            max_turns,
            ending: None,
        };
        let opening = session.prompt_set.opening().clone();
        session.push_agent(&opening.text, Some(opening.provenance), now);
        Ok(session)
    }

    pub fn phase(&self) -> DialogPhase {
        self.phase
    }

    pub fn transcript(&self) -> &[Turn] {
        &self.transcript
    }

    pub fn prompt_set(&self) -> &PromptSet {
        &self.prompt_set
    }

    pub fn max_turns(&self) -> usize {
        self.max_turns
    }

    pub fn is_closed(&self) -> bool {
        self.phase == DialogPhase::Closed
    }

    /// How the session ended, or `None` while it is still open.
    pub fn ending(&self) -> Option<Ending> {
        self.ending
    }

    pub fn followups_used(&self, phase: DialogPhase) -> usize {
        self.followups_used.get(&phase).copied().unwrap_or(0)
    }

    /// The last agent turn (the prompt awaiting a reply).
    pub fn last_agent_turn(&self) -> &Turn {
        self.transcript
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Agent)
            .expect("transcript starts with the opening")
    }

    fn push_agent(&mut self, text: &str, provenance: Option<Provenance>, now: u64) {
        self.transcript.push(Turn {
            index: self.transcript.len(),
            speaker: Speaker::Agent,
            text: text.to_string(),
            phase: self.phase,
            intent: None,
            timestamp: now,
            provenance,
        });
    }

    pub fn advance(&mut self, respondent_text: &str) -> Result<&Turn, DialogError> {
        self.advance_at(respondent_text, now_millis())
    }

    /// Records the reply, moves to the next phase and appends the agent's
    /// prompt (or the closing message). Both turns carry `now`.
    pub fn advance_at(&mut self, respondent_text: &str, now: u64) -> Result<&Turn, DialogError> {
        if self.is_closed() {
            return Err(DialogError::SessionClosed);
        }
        let intent = classify_intent(respondent_text, &self.lexicon);
        self.transcript.push(Turn {
            index: self.transcript.len(),
            speaker: Speaker::Respondent,
            text: respondent_text.to_string(),
            phase: self.phase,
            intent: Some(intent),
            timestamp: now,
            provenance: None,
        });

        // Close early when the agent turn would leave no room for another
        // reply and prompt.
        let limited = self.transcript.len() + 3 > self.max_turns;
        let next = match self.phase {
            DialogPhase::Descriptive => None,
            _ if limited => None,
            phase => Some(self.transition(phase, intent.label)),
        };
        match next {
            Some((phase, prompt)) => {
                if matches!(phase, DialogPhase::OpeningFollowUp | DialogPhase::ConceptualFollowUp(_)) {
                    *self.followups_used.entry(self.phase).or_insert(0) += 1;
                }
                self.phase = phase;
                self.push_agent(&prompt.text, Some(prompt.provenance), now);
            }
            None => {
                self.ending = Some(if self.phase == DialogPhase::Descriptive {
                    Ending::Completed
                } else {
                    Ending::TurnLimited
                });
                self.phase = DialogPhase::Closed;
                self.push_agent(CLOSING_MESSAGE, None, now);
            }
        }
        Ok(self.transcript.last().expect("agent turn just pushed"))
    }

    fn budget_left(&self, phase: DialogPhase) -> bool {
        self.followups_used(phase) < FOLLOWUP_BUDGET
    }

    fn after_slot(&self, slot: usize) -> (DialogPhase, Prompt) {
        let set = &self.prompt_set;
        match set.conceptual_prompt(slot + 1) {
            Some(p) => (DialogPhase::Conceptual(slot + 1), p.clone()),
            None => (DialogPhase::Descriptive, set.descriptive_prompt().clone()),
        }
    }

    fn first_slot(&self) -> (DialogPhase, Prompt) {
        let set = &self.prompt_set;
        match set.conceptual_prompt(0) {
            Some(p) => (DialogPhase::Conceptual(0), p.clone()),
            None => (DialogPhase::Descriptive, set.descriptive_prompt().clone()),
        }
    }

    fn transition(&self, phase: DialogPhase, label: IntentLabel) -> (DialogPhase, Prompt) {
        let set = &self.prompt_set;
        match (phase, label) {
            (DialogPhase::Opening, IntentLabel::Negative) if self.budget_left(phase) => {
                (DialogPhase::OpeningFollowUp, set.negative_followup().clone())
            }
            (DialogPhase::Opening, IntentLabel::Unclear) if self.budget_left(phase) => {
                (DialogPhase::OpeningFollowUp, set.generic_followup().clone())
            }
            (DialogPhase::Opening | DialogPhase::OpeningFollowUp, _) => self.first_slot(),
            (DialogPhase::Conceptual(i), IntentLabel::Unclear) if self.budget_left(phase) => {
                (DialogPhase::ConceptualFollowUp(i), set.generic_followup().clone())
            }
            (DialogPhase::Conceptual(i) | DialogPhase::ConceptualFollowUp(i), _) => self.after_slot(i),
            (DialogPhase::Descriptive | DialogPhase::Closed, _) => unreachable!("handled by advance"),
        }
    }

    /// Rebuilds a session from its transcript by re-running every reply.
    /// Fails if any regenerated agent turn differs from the stored one.
    pub fn replay(
        session_id: impl Into<String>,
        prompt_set: Arc<PromptSet>,
        lexicon: Arc<ValenceLexicon>,
        max_turns: usize,
        turns: &[Turn],
    ) -> Result<Self, DialogError> {
        let mismatch = |index: usize, message: String| DialogError::ReplayMismatch { index, message };
        let first = turns.first().ok_or_else(|| mismatch(0, "empty transcript".into()))?;
        let mut session = Self::new(session_id, prompt_set, lexicon, max_turns, first.timestamp)?;
        if session.transcript[0].text != first.text || first.speaker != Speaker::Agent {
            return Err(mismatch(0, "opening differs".into()));
        }
        let rest = &turns[1..];
        if !rest.len().is_multiple_of(2) {
            return Err(mismatch(turns.len() - 1, "reply without an agent turn".into()));
        }
        for pair in rest.chunks(2) {
            let (reply, agent) = (&pair[0], &pair[1]);
            if reply.speaker != Speaker::Respondent || agent.speaker != Speaker::Agent {
                return Err(mismatch(reply.index, "speakers do not alternate".into()));
            }
            let regenerated = session
                .advance_at(&reply.text, reply.timestamp)
                .map_err(|e| mismatch(reply.index, e.to_string()))?;
            if regenerated.text != agent.text || regenerated.phase != agent.phase {
                return Err(mismatch(
                    agent.index,
                    format!(
                        "expected `{}` ({}), stored `{}` ({})",
                        regenerated.text, regenerated.phase, agent.text, agent.phase
                    ),
                ));
            }
            let last = session.transcript.len() - 1;
            session.transcript[last].timestamp = agent.timestamp;
        }
        Ok(session)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: IntentLabel,
    pub to: IntentLabel,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustIndicators {
    /// Respondent turns.
    pub turn_count: usize,
    pub valence_sequence: Vec<IntentLabel>,
    pub valence_transitions: Vec<Transition>,
    pub mean_response_tokens: f64,
    pub followup_count: usize,
    pub ending: Ending,
    pub phase: DialogPhase,
}

/// Indicators computed from the transcript alone, so they work on
/// in-progress sessions (reported as abandoned until they close).
pub fn extract_indicators(session: &DialogSession) -> TrustIndicators {
    indicators_from_turns(session.transcript(), session.phase(), session.ending())
}

pub fn indicators_from_turns(turns: &[Turn], phase: DialogPhase, ending: Option<Ending>) -> TrustIndicators {
    let replies: Vec<&Turn> = turns.iter().filter(|t| t.speaker == Speaker::Respondent).collect();
    let valence_sequence: Vec<IntentLabel> = replies
        .iter()
        .map(|t| t.intent.map_or(IntentLabel::Unclear, |i| i.label))
        .collect();
    let mut transitions: BTreeMap<(IntentLabel, IntentLabel), usize> = BTreeMap::new();
    for w in valence_sequence.windows(2) {
        *transitions.entry((w[0], w[1])).or_insert(0) += 1;
    }
    let tokens: usize = replies.iter().map(|t| tokenize(&t.text).len()).sum();
    let mean_response_tokens = if replies.is_empty() {
        0.0
    } else {
        tokens as f64 / replies.len() as f64
    };
    TrustIndicators {
        turn_count: replies.len(),
        valence_sequence,
        valence_transitions: transitions
            .into_iter()
            .map(|((from, to), count)| Transition { from, to, count })
            .collect(),
        mean_response_tokens,
        followup_count: turns
            .iter()
            .filter(|t| t.speaker == Speaker::Agent && t.provenance == Some(Provenance::Followup))
            .count(),
        ending: ending.unwrap_or(Ending::Abandoned),
        phase,
    }
}

/// One line of a transcript export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub session_id: String,
    #[serde(flatten)]
    pub turn: Turn,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

pub fn transcript_jsonl(session: &DialogSession) -> String {
    let mut out = String::new();
    for turn in session.transcript() {
        let record = TurnRecord {
            session_id: session.session_id.clone(),
            turn: turn.clone(),
            idempotency_key: None,
        };
        out.push_str(&serde_json::to_string(&record).expect("turn serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ScaleItem, Valence};
    use crate::prompt_gen::{build_prompt_set, PromptSources, TemplateBank, DEFAULT_DESCRIPTIVE_PER_SIDE};
    use crate::scale_ranking::DatabaseItem;
    use crate::summarization::{ClusterSummary, ConceptLexicon};

    fn lexicon() -> Arc<ValenceLexicon> {
        Arc::new(ValenceLexicon::bundled())
    }

    fn prompt_set(terms: &[&str]) -> Arc<PromptSet> {
        let summaries: Vec<ClusterSummary> = terms
            .iter()
            .enumerate()
            .map(|(i, t)| ClusterSummary {
                cluster_id: i,
                members: vec![t.to_string()],
                centroid: vec![1.0],
                centroid_norm: 1.0,
                ranked_terms: vec![(t.to_string(), 1.0)],
                selected_term: t.to_string(),
            })
            .collect();
        let items = [
            ("the system's actions will have harmful outcomes", Valence::Negative),
            ("the system is dependable", Valence::Positive),
        ]
        .iter()
        .enumerate()
        .map(|(i, (text, valence))| DatabaseItem {
            scale_id: "s".into(),
            item: ScaleItem {
                item_id: format!("s-{i}"),
                text: text.to_string(),
                valence: *valence,
            },
        })
        .collect::<Vec<_>>();
        let lex = ValenceLexicon::bundled();
        Arc::new(
            build_prompt_set(
                &summaries,
                &PromptSources {
                    bank: &TemplateBank::bundled(),
                    concepts: &ConceptLexicon::bundled(),
                    surfaces: &BTreeMap::new(),
                    items: &items,
                    lexicon: &lex,
                    descriptive_per_side: DEFAULT_DESCRIPTIVE_PER_SIDE,
                },
            )
            .unwrap(),
        )
    }

    fn session(terms: &[&str]) -> DialogSession {
        DialogSession::new("s1", prompt_set(terms), lexicon(), DEFAULT_MAX_TURNS, 1000).unwrap()
    }

    #[test]
    fn intent_examples() {
        let lex = ValenceLexicon::bundled();
        assert_eq!(classify_intent("I don't really like it", &lex), Intent::from_score(-1));
        assert_eq!(classify_intent("", &lex).label, IntentLabel::Unclear);
        assert_eq!(
            classify_intent("I like it, it is reliable", &lex),
            Intent::from_score(2)
        );
        assert_eq!(classify_intent("It is fine I guess", &lex).label, IntentLabel::Unclear);
        assert_eq!(classify_intent("not at all reliable", &lex).score, -1);
        assert_eq!(classify_intent("never suspicious", &lex).score, 1);
        assert_eq!(classify_intent("I DON'T LIKE IT!!!", &lex).label, IntentLabel::Negative);
    }

    #[test]
    fn negation_window_is_three_tokens() {
        let lex = ValenceLexicon::bundled();
        assert_eq!(classify_intent("not a b like", &lex).score, -1);
        assert_eq!(classify_intent("not a b c like", &lex).score, 1);
        assert_eq!(classify_intent("not not like", &lex).score, -1);
    }

    #[test]
    fn phase_strings_round_trip() {
        for phase in [
            DialogPhase::Opening,
            DialogPhase::OpeningFollowUp,
            DialogPhase::Conceptual(3),
            DialogPhase::ConceptualFollowUp(0),
            DialogPhase::Descriptive,
            DialogPhase::Closed,
        ] {
            assert_eq!(phase.to_string().parse::<DialogPhase>().unwrap(), phase);
            let json = serde_json::to_string(&phase).unwrap();
            assert_eq!(serde_json::from_str::<DialogPhase>(&json).unwrap(), phase);
        }
        assert!("conceptual:x".parse::<DialogPhase>().is_err());
        assert!(DialogPhase::Conceptual(0) < DialogPhase::ConceptualFollowUp(0));
        assert!(DialogPhase::ConceptualFollowUp(0) < DialogPhase::Conceptual(1));
        assert!(DialogPhase::Conceptual(9) < DialogPhase::Descriptive);
    }

    #[test]
    fn negative_opening_then_concept() {
        let mut s = session(&["perform", "purpos"]);
        assert_eq!(s.transcript().len(), 1);
        let t = s.advance_at("I don't really like it", 1001).unwrap();
        assert_eq!(t.text, "Can you explain what makes you dislike it?");
        assert_eq!(s.phase(), DialogPhase::OpeningFollowUp);
        let t = s.advance_at("It was slow", 1002).unwrap();
        assert_eq!(t.text, "Can you tell me your thoughts on system performance?");
        assert_eq!(s.phase(), DialogPhase::Conceptual(0));
    }

    #[test]
    fn positive_opening_skips_followup() {
        let mut s = session(&["perform"]);
        s.advance_at("I like it, it is reliable", 1).unwrap();
        assert_eq!(s.phase(), DialogPhase::Conceptual(0));
    }

    #[test]
    fn unclear_opening_gets_generic_followup() {
        let mut s = session(&["perform"]);
        assert_eq!(s.advance_at("hmm", 1).unwrap().text, "Could you say more about that?");
        assert_eq!(s.phase(), DialogPhase::OpeningFollowUp);
    }

    #[test]
    fn full_session_completes() {
        let mut s = session(&["perform", "purpos"]);
        for text in ["it is reliable", "hmm", "ok then", "I like it"] {
            s.advance_at(text, 5).unwrap();
        }
        assert_eq!(s.phase(), DialogPhase::Descriptive);
        assert_eq!(
            s.last_agent_turn().text,
            "To what extent do you think the system's actions will have harmful outcomes?"
        );
        assert_eq!(s.advance_at("a little", 6).unwrap().text, CLOSING_MESSAGE);
        assert_eq!(s.ending(), Some(Ending::Completed));
        assert_eq!(s.advance_at("more", 7), Err(DialogError::SessionClosed));
        let ind = extract_indicators(&s);
        assert_eq!(ind.turn_count, 5);
        assert_eq!(ind.ending, Ending::Completed);
        assert_eq!(ind.followup_count, 1);
        for w in s.transcript().windows(2) {
            assert_ne!(w[0].speaker, w[1].speaker);
            assert!(w[0].phase <= w[1].phase);
        }
        for t in s.transcript().iter().filter(|t| t.speaker == Speaker::Agent) {
            assert!(t.text == CLOSING_MESSAGE || s.prompt_set().contains_text(&t.text));
        }
    }

    #[test]
    fn turn_limit_closes_session() {
        let mut s = DialogSession::new("s", prompt_set(&["perform", "purpos", "process"]), lexicon(), 5, 0).unwrap();
        s.advance_at("hmm", 0).unwrap();
        assert_eq!(s.transcript().len(), 3);
        assert_eq!(s.advance_at("hmm", 0).unwrap().text, CLOSING_MESSAGE);
        assert_eq!(s.transcript().len(), 5);
        assert_eq!(s.ending(), Some(Ending::TurnLimited));
        assert!(matches!(
            DialogSession::new("s", prompt_set(&["perform"]), lexicon(), 2, 0),
            Err(DialogError::InvalidMaxTurns(2))
        ));
    }

    #[test]
    fn indicators_tabulate_sequence() {
        let mut s = session(&["perform", "purpos", "process"]);
        for text in ["I don't like it", "it is not reliable", "hmm", "it is reliable"] {
            s.advance_at(text, 0).unwrap();
        }
        let ind = extract_indicators(&s);
        assert_eq!(ind.turn_count, 4);
        assert_eq!(
            ind.valence_sequence,
            [
                IntentLabel::Negative,
                IntentLabel::Negative,
                IntentLabel::Unclear,
                IntentLabel::Positive
            ]
        );
        let nn = ind
            .valence_transitions
            .iter()
            .find(|t| t.from == IntentLabel::Negative && t.to == IntentLabel::Negative)
            .unwrap();
        assert_eq!(nn.count, 1);
        assert_eq!(ind.ending, Ending::Abandoned);
        assert_eq!(ind.mean_response_tokens, (4 + 4 + 1 + 3) as f64 / 4.0);
    }

    #[test]
    fn replay_reconstructs_phase() {
        let mut s = session(&["perform", "purpos"]);
        for (i, text) in ["I don't really like it", "slow", "hmm"].iter().enumerate() {
            s.advance_at(text, 10 + i as u64).unwrap();
        }
        let r = DialogSession::replay(
            "s1",
            prompt_set(&["perform", "purpos"]),
            lexicon(),
            DEFAULT_MAX_TURNS,
            s.transcript(),
        )
        .unwrap();
        assert_eq!(r.phase(), s.phase());
        assert_eq!(r.transcript(), s.transcript());
        assert_eq!(r.followups_used(DialogPhase::Conceptual(0)), 1);

        let mut tampered = s.transcript().to_vec();
        tampered[2].text = "something else".into();
        assert!(matches!(
            DialogSession::replay(
                "s1",
                prompt_set(&["perform", "purpos"]),
                lexicon(),
                DEFAULT_MAX_TURNS,
                &tampered
            ),
            Err(DialogError::ReplayMismatch { index: 2, .. })
        ));
    }

    #[test]
    fn jsonl_records() {
        let mut s = session(&["perform"]);
        s.advance_at("I don't really like it", 42).unwrap();
        let jsonl = transcript_jsonl(&s);
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), 3);
        let v: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v["session_id"], "s1");
        assert_eq!(v["index"], 1);
        assert_eq!(v["speaker"], "respondent");
        assert_eq!(v["phase"], "opening");
        assert_eq!(v["intent"]["label"], "negative");
        assert_eq!(v["timestamp"], 42);
        let back: TurnRecord = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(back.turn, s.transcript()[2]);
    }
}
