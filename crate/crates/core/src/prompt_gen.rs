//! Template engine for the prompt continuum. Prompts range from directive
//! (Descriptive, built from scale items) through Conceptual (slot-filled
//! with a cluster's concept) and Declarative (the opening) to the most
//! nondirective Interpretive follow-ups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Valence;
use crate::resources;
use crate::scale_ranking::DatabaseItem;
use crate::summarization::{ClusterSummary, ConceptLexicon};
use crate::textprep::tokenize;
use crate::valence::ValenceLexicon;

/// Attitude word used to fill the interpretive follow-up after a negative
/// reply.
pub const NEGATIVE_ATTITUDE: &str = "dislike";

/// Descriptive prompts taken per valence side.
pub const DEFAULT_DESCRIPTIVE_PER_SIDE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptLevel {
    Descriptive,
    Conceptual,
    Declarative,
    Interpretive,
}

impl PromptLevel {
    /// Directive to nondirective.
    pub const ALL: [PromptLevel; 4] = [
        Self::Descriptive,
        Self::Conceptual,
        Self::Declarative,
        Self::Interpretive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Descriptive => "descriptive",
            Self::Conceptual => "conceptual",
            Self::Declarative => "declarative",
            Self::Interpretive => "interpretive",
        }
    }
}

impl fmt::Display for PromptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{pattern}`: {message}")]
    InvalidTemplate { pattern: String, message: String },
    #[error("missing value for slot `{0}`")]
    MissingSlot(String),
    #[error("unexpected slot `{0}`")]
    UnexpectedSlot(String),
    #[error("prompt `{text}` fails the nondirectiveness lint: {}", join(violations))]
    LintViolation { text: String, violations: Vec<Violation> },
    #[error("template bank has no {0} template")]
    MissingLevel(&'static str),
    #[error("no cluster summaries")]
    EmptySummaries,
    #[error("no conceptual prompt survived the lint")]
    NoConceptualPrompts,
    #[error("no scale item yields a descriptive prompt")]
    NoDescriptivePrompts,
    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    EmptyPrompt,
    ValencedTerm {
        surface: String,
        stem: String,
        polarity: i32,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyPrompt => f.write_str("empty prompt"),
            Self::ValencedTerm {
                surface,
                stem,
                polarity,
            } => {
                let side = if *polarity > 0 { "positive" } else { "negative" };
                write!(f, "`{surface}` ({stem}) is in the {side} lexicon")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub level: PromptLevel,
    pub pattern: String,
    #[serde(default)]
    pub slots: Vec<String>,
}

/// Placeholder names in order of appearance. Unbalanced braces are errors.
fn placeholders(pattern: &str) -> Result<Vec<String>, String> {
    let mut names = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err("unmatched `}`".into());
        }
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or("unmatched `{`")?;
        let name = &after[..close];
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad placeholder `{{{name}}}`"));
        }
        names.push(name.to_string());
        rest = &after[close + 1..];
    }
    Ok(names)
}

impl PromptTemplate {
    pub fn new(level: PromptLevel, pattern: &str, slots: &[&str]) -> Result<Self, PromptError> {
        let template = Self {
            level,
            pattern: pattern.to_string(),
            slots: slots.iter().map(|s| s.to_string()).collect(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |message: String| PromptError::InvalidTemplate {
            pattern: self.pattern.clone(),
            message,
        };
        if self.pattern.trim().is_empty() {
            return Err(invalid("empty pattern".into()));
        }
        let found: BTreeSet<String> = placeholders(&self.pattern).map_err(invalid)?.into_iter().collect();
        let declared: BTreeSet<String> = self.slots.iter().cloned().collect();
        if declared.len() != self.slots.len() {
            return Err(invalid("duplicate slot names".into()));
        }
        if let Some(missing) = found.difference(&declared).next() {
            return Err(invalid(format!("placeholder `{missing}` is not declared")));
        }
        if let Some(unused) = declared.difference(&found).next() {
            return Err(invalid(format!("slot `{unused}` does not appear in the pattern")));
        }
        if self.level == PromptLevel::Declarative && !self.slots.is_empty() {
            return Err(invalid("declarative templates take no slots".into()));
        }
        Ok(())
    }
}

/// A validated set of templates covering all four levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    templates: Vec<PromptTemplate>,
}

impl TemplateBank {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        for t in &templates {
            t.validate()?;
        }
        let bank = Self { templates };
        bank.declarative()?;
        bank.conceptual()?;
        bank.descriptive()?;
        bank.generic_followup()?;
        Ok(bank)
    }

    pub fn bundled() -> Self {
        Self::parse(resources::TEMPLATES).expect("bundled template bank is valid")
    }

    pub fn parse(json: &str) -> Result<Self, PromptError> {
        let templates = serde_json::from_str(json).map_err(|e| PromptError::Malformed {
            what: "template bank".into(),
            message: e.to_string(),
        })?;
        Self::new(templates)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    fn first(&self, level: PromptLevel, pred: impl Fn(&PromptTemplate) -> bool) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.level == level && pred(t))
    }

    fn single_slot(&self, level: PromptLevel) -> Result<&PromptTemplate, PromptError> {
        self.first(level, |t| t.slots.len() == 1)
            .ok_or(PromptError::MissingLevel(level.as_str()))
    }

    pub fn declarative(&self) -> Result<&PromptTemplate, PromptError> {
        self.first(PromptLevel::Declarative, |_| true)
            .ok_or(PromptError::MissingLevel("declarative"))
    }

    pub fn conceptual(&self) -> Result<&PromptTemplate, PromptError> {
        self.single_slot(PromptLevel::Conceptual)
    }

    pub fn descriptive(&self) -> Result<&PromptTemplate, PromptError> {
        self.single_slot(PromptLevel::Descriptive)
    }

    /// The zero-slot interpretive follow-up.
    pub fn generic_followup(&self) -> Result<&PromptTemplate, PromptError> {
        self.first(PromptLevel::Interpretive, |t| t.slots.is_empty())
            .ok_or(PromptError::MissingLevel("interpretive"))
    }

    /// The interpretive follow-up that takes an attitude word, if any.
    pub fn attitude_followup(&self) -> Option<&PromptTemplate> {
        self.first(PromptLevel::Interpretive, |t| t.slots.len() == 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Opening,
    Followup,
    Cluster {
        cluster_id: usize,
    },
    Item {
        scale_id: String,
        item_id: String,
        valence: Valence,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub level: PromptLevel,
    pub text: String,
    pub slot_values: BTreeMap<String, String>,
    pub provenance: Provenance,
}

/// Violations of the nondirectiveness rule. Descriptive prompts are exempt
/// from the valence check; every level must be non-empty.
pub fn lint_nondirective(prompt: &Prompt, lexicon: &ValenceLexicon) -> Vec<Violation> {
    if prompt.text.trim().is_empty() {
        return vec![Violation::EmptyPrompt];
    }
    if prompt.level == PromptLevel::Descriptive {
        return Vec::new();
    }
    tokenize(&prompt.text)
        .into_iter()
        .filter_map(|t| {
            let polarity = lexicon.polarity(&t.stem);
            (polarity != 0).then_some(Violation::ValencedTerm {
                surface: t.surface,
                stem: t.stem,
                polarity,
            })
        })
        .collect()
}

/// Substitutes every slot, then lints the result.
pub fn formulate_prompt(
    template: &PromptTemplate,
    slot_values: &BTreeMap<String, String>,
    provenance: Provenance,
    lexicon: &ValenceLexicon,
) -> Result<Prompt, PromptError> {
    template.validate()?;
    if let Some(missing) = template.slots.iter().find(|s| !slot_values.contains_key(*s)) {
        return Err(PromptError::MissingSlot(missing.clone()));
    }
    if let Some(extra) = slot_values.keys().find(|k| !template.slots.contains(k)) {
        return Err(PromptError::UnexpectedSlot(extra.clone()));
    }
    let mut text = String::with_capacity(template.pattern.len());
    let mut rest = template.pattern.as_str();
    while let Some(open) = rest.find('{') {
        let close = open + rest[open..].find('}').expect("validated pattern");
        text.push_str(&rest[..open]);
        text.push_str(&slot_values[&rest[open + 1..close]]);
        rest = &rest[close + 1..];
    }
    text.push_str(rest);
    let prompt = Prompt {
        level: template.level,
        text,
        slot_values: slot_values.clone(),
        provenance,
    };
    let violations = lint_nondirective(&prompt, lexicon);
    if violations.is_empty() {
        Ok(prompt)
    } else {
        Err(PromptError::LintViolation {
            text: prompt.text,
            violations,
        })
    }
}

const PRONOUN_SHIFTS: &[(&str, &str)] = &[
    ("i", "you"),
    ("me", "you"),
    ("my", "your"),
    ("mine", "yours"),
    ("myself", "yourself"),
    ("am", "are"),
];

/// Opening words of items that are already questions.
const INTERROGATIVE_OPENERS: &[&str] = &[
    "how", "what", "which", "why", "when", "overall", "to what", "do you", "can you",
];

/// Rewrites a scale item as the clause of a "to what extent" question:
/// first-person forms become second person ("i was" becomes "you were"),
/// the first letter is lowercased and trailing punctuation dropped. Items
/// that are already questions give `None`.
pub fn interrogative_clause(item: &str) -> Option<String> {
    let trimmed = item.trim().trim_end_matches(['.', '!', '?', ';', ':', ' ']);
    let lower = trimmed.to_lowercase();
    if trimmed.is_empty()
        || item.trim_end().ends_with('?')
        || INTERROGATIVE_OPENERS
            .iter()
            .any(|o| lower == *o || lower.starts_with(&format!("{o} ")))
    {
        return None;
    }
    let words: Vec<&str> = trimmed.split_whitespace().collect();
    let shifted = words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let lw = w.to_lowercase();
            if lw == "was" && i > 0 && words[i - 1].eq_ignore_ascii_case("i") {
                return "were".to_string();
            }
            match PRONOUN_SHIFTS.iter().find(|(from, _)| *from == lw) {
                Some((_, to)) => to.to_string(),
                None if i == 0 => lowercase_first(w),
                None => w.to_string(),
            }
        })
        .collect::<Vec<_>>();
    Some(shifted.join(" "))
}

fn lowercase_first(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// A prompt the lint or deduplication kept out of the set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedPrompt {
    pub level: PromptLevel,
    pub text: String,
    pub provenance: Provenance,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub declarative: Vec<Prompt>,
    pub interpretive: Vec<Prompt>,
    pub conceptual: Vec<Prompt>,
    pub descriptive: Vec<Prompt>,
    /// Display form of each conceptual prompt's concept, in slot order.
    pub concept_slots: Vec<String>,
    #[serde(default)]
    pub rejected: Vec<RejectedPrompt>,
}

impl PromptSet {
    pub fn opening(&self) -> &Prompt {
        &self.declarative[0]
    }

    /// The follow-up for a negative reply, falling back to the generic one.
    pub fn negative_followup(&self) -> &Prompt {
        self.interpretive
            .iter()
            .find(|p| p.slot_values.get("attitude").map(String::as_str) == Some(NEGATIVE_ATTITUDE))
            .unwrap_or_else(|| self.generic_followup())
    }

    pub fn generic_followup(&self) -> &Prompt {
        self.interpretive
            .iter()
            .find(|p| p.slot_values.is_empty())
            .unwrap_or(&self.interpretive[0])
    }

    pub fn conceptual_prompt(&self, slot: usize) -> Option<&Prompt> {
        self.conceptual.get(slot)
    }

    pub fn descriptive_prompt(&self) -> &Prompt {
        &self.descriptive[0]
    }

    pub fn slot_count(&self) -> usize {
        self.conceptual.len()
    }

    pub fn all(&self) -> impl Iterator<Item = &Prompt> {
        self.declarative
            .iter()
            .chain(&self.interpretive)
            .chain(&self.conceptual)
            .chain(&self.descriptive)
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.all().any(|p| p.text == text)
    }

    /// Positive and negative descriptive prompt counts, by item valence.
    pub fn descriptive_balance(&self) -> (usize, usize) {
        let count = |v: Valence| {
            self.descriptive
                .iter()
                .filter(|p| matches!(&p.provenance, Provenance::Item { valence, .. } if *valence == v))
                .count()
        };
        (count(Valence::Positive), count(Valence::Negative))
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        for (name, prompts) in [
            ("declarative", &self.declarative),
            ("interpretive", &self.interpretive),
            ("conceptual", &self.conceptual),
            ("descriptive", &self.descriptive),
        ] {
            if prompts.is_empty() {
                return Err(format!("no {name} prompt"));
            }
        }
        if self.concept_slots.len() != self.conceptual.len() {
            return Err("concept slots and conceptual prompts differ in length".into());
        }
        let (pos, neg) = self.descriptive_balance();
        if pos.abs_diff(neg) > 1 {
            return Err(format!(
                "descriptive prompts unbalanced: {pos} positive, {neg} negative"
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("prompt set serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PromptError> {
        let set: Self = serde_json::from_str(text).map_err(|e| PromptError::Malformed {
            what: "prompt set".into(),
            message: e.to_string(),
        })?;
        set.check_invariants().map_err(|message| PromptError::Malformed {
            what: "prompt set".into(),
            message,
        })?;
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<(), PromptError> {
        std::fs::write(path, self.to_json()).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Inputs that shape a prompt set besides the cluster summaries.
#[derive(Debug, Clone, Copy)]
pub struct PromptSources<'a> {
    pub bank: &'a TemplateBank,
    pub concepts: &'a ConceptLexicon,
    /// Most frequent surface form per stem, for concepts the lexicon lacks.
    pub surfaces: &'a BTreeMap<String, String>,
    pub items: &'a [DatabaseItem],
    pub lexicon: &'a ValenceLexicon,
    pub descriptive_per_side: usize,
}

fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn concept_display(stem: &str, sources: &PromptSources<'_>) -> String {
    sources
        .concepts
        .display(stem)
        .or_else(|| sources.surfaces.get(stem).map(String::as_str))
        .unwrap_or(stem)
        .to_string()
}

/// Picks an equal number of positive and negative items (at most
/// `per_side` each), returned in database order. When one side is empty, a
/// single item from the other side keeps the set non-empty.
fn select_descriptive(items: &[DatabaseItem], per_side: usize) -> Vec<(&DatabaseItem, String)> {
    let usable: Vec<(&DatabaseItem, String)> = items
        .iter()
        .filter(|i| matches!(i.item.valence, Valence::Positive | Valence::Negative))
        .filter_map(|i| interrogative_clause(&i.item.text).map(|c| (i, c)))
        .collect();
    let available = |v: Valence| usable.iter().filter(|(i, _)| i.item.valence == v).count();
    let (pos, neg) = (available(Valence::Positive), available(Valence::Negative));
    let n = per_side.min(pos).min(neg);
    let (mut take_pos, mut take_neg) = if n > 0 {
        (n, n)
    } else {
        (pos.min(1), if pos == 0 { neg.min(1) } else { 0 })
    };
    usable
        .into_iter()
        .filter(|(i, _)| {
            let quota = if i.item.valence == Valence::Positive {
                &mut take_pos
            } else {
                &mut take_neg
            };
            let keep = *quota > 0;
            *quota = quota.saturating_sub(1);
            keep
        })
        .collect()
}

/// Builds the full prompt set: the declarative opening, the interpretive
/// follow-ups, one conceptual prompt per distinct cluster concept (in
/// cluster order) and balanced descriptive prompts. Prompts failing the
/// lint and repeated concepts are recorded in `rejected`.
pub fn build_prompt_set(summaries: &[ClusterSummary], sources: &PromptSources<'_>) -> Result<PromptSet, PromptError> {
    if summaries.is_empty() {
        return Err(PromptError::EmptySummaries);
    }
    let bank = sources.bank;
    let lexicon = sources.lexicon;
    let declarative = vec![formulate_prompt(
        bank.declarative()?,
        &BTreeMap::new(),
        Provenance::Opening,
        lexicon,
    )?];

    let mut interpretive = Vec::new();
    if let Some(t) = bank.attitude_followup() {
        let values = slots(&[(t.slots[0].as_str(), NEGATIVE_ATTITUDE)]);
        interpretive.push(formulate_prompt(t, &values, Provenance::Followup, lexicon)?);
    }
    interpretive.push(formulate_prompt(
        bank.generic_followup()?,
        &BTreeMap::new(),
        Provenance::Followup,
        lexicon,
    )?);

    let conceptual_template = bank.conceptual()?;
    let mut conceptual = Vec::new();
    let mut concept_slots = Vec::new();
    let mut rejected = Vec::new();
    let mut ordered: Vec<&ClusterSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| s.cluster_id);
    for summary in ordered {
        let display = concept_display(&summary.selected_term, sources);
        let provenance = Provenance::Cluster {
            cluster_id: summary.cluster_id,
        };
        let values = slots(&[(conceptual_template.slots[0].as_str(), display.as_str())]);
        match formulate_prompt(conceptual_template, &values, provenance.clone(), lexicon) {
            Ok(prompt) if concept_slots.contains(&display) => rejected.push(RejectedPrompt {
                level: PromptLevel::Conceptual,
                text: prompt.text,
                provenance,
                reason: format!("duplicate concept `{display}`"),
            }),
            Ok(prompt) => {
                concept_slots.push(display);
                conceptual.push(prompt);
            }
            Err(PromptError::LintViolation { text, violations }) => {
                log::warn!(
                    "conceptual prompt for cluster {} rejected: {}",
                    summary.cluster_id,
                    join(&violations)
                );
                rejected.push(RejectedPrompt {
                    level: PromptLevel::Conceptual,
                    text,
                    provenance,
                    reason: join(&violations),
                });
            }
            Err(e) => return Err(e),
        }
    }
    if conceptual.is_empty() {
        return Err(PromptError::NoConceptualPrompts);
    }

    let descriptive_template = bank.descriptive()?;
    let mut descriptive = Vec::new();
    for (item, clause) in select_descriptive(sources.items, sources.descriptive_per_side) {
        let values = slots(&[(descriptive_template.slots[0].as_str(), clause.as_str())]);
        let provenance = Provenance::Item {
            scale_id: item.scale_id.clone(),
            item_id: item.item.item_id.clone(),
            valence: item.item.valence,
        };
        descriptive.push(formulate_prompt(descriptive_template, &values, provenance, lexicon)?);
    }
    if descriptive.is_empty() {
        return Err(PromptError::NoDescriptivePrompts);
    }

    let set = PromptSet {
        declarative,
        interpretive,
        conceptual,
        descriptive,
        concept_slots,
        rejected,
    };
    debug_assert!(set.check_invariants().is_ok());
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ScaleItem;

    fn lexicon() -> ValenceLexicon {
        ValenceLexicon::bundled()
    }

    fn summary(cluster_id: usize, term: &str) -> ClusterSummary {
        ClusterSummary {
            cluster_id,
            members: vec![term.to_string()],
            centroid: vec![1.0],
            centroid_norm: 1.0,
            ranked_terms: vec![(term.to_string(), 1.0)],
            selected_term: term.to_string(),
        }
    }

    fn item(scale: &str, n: usize, text: &str, valence: Valence) -> DatabaseItem {
        DatabaseItem {
            scale_id: scale.into(),
            item: ScaleItem {
                item_id: format!("{scale}-{n:02}"),
                text: text.into(),
                valence,
            },
        }
    }

    fn items() -> Vec<DatabaseItem> {
        vec![
            item("s", 1, "the system is reliable", Valence::Positive),
            item(
                "s",
                2,
                "the system's actions will have harmful outcomes",
                Valence::Negative,
            ),
            item("s", 3, "i can trust the system", Valence::Positive),
            item("s", 4, "i am familiar with the system", Valence::Neutral),
            item("s", 5, "the system is dependable", Valence::Positive),
            item("s", 6, "the system is deceptive", Valence::Negative),
            item("s", 7, "the system is suspicious", Valence::Negative),
        ]
    }

    fn build(summaries: &[ClusterSummary], items: &[DatabaseItem]) -> Result<PromptSet, PromptError> {
        let bank = TemplateBank::bundled();
        let concepts = ConceptLexicon::bundled();
        let surfaces = BTreeMap::from([("reliabl".to_string(), "reliable".to_string())]);
        let lex = lexicon();
        build_prompt_set(
            summaries,
            &PromptSources {
                bank: &bank,
                concepts: &concepts,
                surfaces: &surfaces,
                items,
                lexicon: &lex,
                descriptive_per_side: DEFAULT_DESCRIPTIVE_PER_SIDE,
            },
        )
    }

    #[test]
    fn conceptual_slot_fill() {
        let bank = TemplateBank::bundled();
        let values = slots(&[("concept", "system performance")]);
        let p = formulate_prompt(
            bank.conceptual().unwrap(),
            &values,
            Provenance::Cluster { cluster_id: 0 },
            &lexicon(),
        )
        .unwrap();
        assert_eq!(p.text, "Can you tell me your thoughts on system performance?");
        assert_eq!(p.level, PromptLevel::Conceptual);
    }

    #[test]
    fn declarative_is_verbatim() {
        let bank = TemplateBank::bundled();
        let t = bank.declarative().unwrap();
        let p = formulate_prompt(t, &BTreeMap::new(), Provenance::Opening, &lexicon()).unwrap();
        assert_eq!(p.text, t.pattern);
    }

    #[test]
    fn slot_errors() {
        let bank = TemplateBank::bundled();
        let t = bank.conceptual().unwrap();
        assert!(matches!(
            formulate_prompt(t, &BTreeMap::new(), Provenance::Opening, &lexicon()),
            Err(PromptError::MissingSlot(s)) if s == "concept"
        ));
        let extra = slots(&[("concept", "x"), ("other", "y")]);
        assert!(matches!(
            formulate_prompt(t, &extra, Provenance::Opening, &lexicon()),
            Err(PromptError::UnexpectedSlot(_))
        ));
    }

    #[test]
    fn template_validation() {
        assert!(PromptTemplate::new(PromptLevel::Conceptual, "About {concept}?", &["concept"]).is_ok());
        assert!(PromptTemplate::new(PromptLevel::Conceptual, "About {concept}?", &[]).is_err());
        assert!(PromptTemplate::new(PromptLevel::Conceptual, "About it?", &["concept"]).is_err());
        assert!(PromptTemplate::new(PromptLevel::Declarative, "Hi {x}?", &["x"]).is_err());
        assert!(PromptTemplate::new(PromptLevel::Conceptual, "About {concept?", &["concept"]).is_err());
        assert!(PromptTemplate::new(PromptLevel::Conceptual, "About concept}?", &[]).is_err());
        assert!(TemplateBank::parse("[]").is_err());
        assert!(TemplateBank::parse("not json").is_err());
    }

    #[test]
    fn lint_examples() {
        let lex = lexicon();
        let prompt = |level, text: &str| Prompt {
            level,
            text: text.into(),
            slot_values: BTreeMap::new(),
            provenance: Provenance::Opening,
        };
        assert!(lint_nondirective(
            &prompt(
                PromptLevel::Conceptual,
                "Can you tell me your thoughts on system performance?"
            ),
            &lex
        )
        .is_empty());
        let v = lint_nondirective(&prompt(PromptLevel::Conceptual, "Is the system suspicious?"), &lex);
        assert_eq!(
            v,
            [Violation::ValencedTerm {
                surface: "suspicious".into(),
                stem: "suspici".into(),
                polarity: -1
            }]
        );
        assert_eq!(
            lint_nondirective(&prompt(PromptLevel::Declarative, "  "), &lex),
            [Violation::EmptyPrompt]
        );
        assert!(lint_nondirective(&prompt(PromptLevel::Descriptive, "Is the system suspicious?"), &lex).is_empty());
    }

    #[test]
    fn bundled_followups_pass_lint() {
        let set = build(&[summary(0, "perform")], &items()).unwrap();
        assert_eq!(
            set.negative_followup().text,
            "Can you explain what makes you dislike it?"
        );
        assert_eq!(set.generic_followup().text, "Could you say more about that?");
        assert_eq!(
            set.opening().text,
            "Can you describe your recent experience interacting with the system?"
        );
    }

    #[test]
    fn interrogative_rewrite() {
        let bank = TemplateBank::bundled();
        let clause = interrogative_clause("the system's actions will have harmful outcomes").unwrap();
        let p = formulate_prompt(
            bank.descriptive().unwrap(),
            &slots(&[("item_clause", &clause)]),
            Provenance::Opening,
            &lexicon(),
        )
        .unwrap();
        assert_eq!(
            p.text,
            "To what extent do you think the system's actions will have harmful outcomes?"
        );
        assert_eq!(
            interrogative_clause("I am wary of the system.").unwrap(),
            "you are wary of the system"
        );
        assert_eq!(
            interrogative_clause("I was able to understand why").unwrap(),
            "you were able to understand why"
        );
        assert_eq!(
            interrogative_clause("The system gives me advice for my decision").unwrap(),
            "the system gives you advice for your decision"
        );
        assert_eq!(interrogative_clause("to what extent can you count on the system"), None);
        assert_eq!(interrogative_clause("overall how much do you trust the system"), None);
        assert_eq!(interrogative_clause("is it good?"), None);
        assert_eq!(interrogative_clause(""), None);
    }

    #[test]
    fn one_conceptual_per_cluster() {
        let set = build(
            &[summary(0, "perform"), summary(1, "purpos"), summary(2, "process")],
            &items(),
        )
        .unwrap();
        assert_eq!(set.conceptual.len(), 3);
        assert_eq!(
            set.concept_slots,
            ["system performance", "system purpose", "system process"]
        );
        assert!(set.rejected.is_empty());
        for (i, p) in set.conceptual.iter().enumerate() {
            assert_eq!(p.provenance, Provenance::Cluster { cluster_id: i });
        }
        set.check_invariants().unwrap();
    }

    #[test]
    fn valenced_concept_rejected_and_reported() {
        let set = build(
            &[summary(0, "perform"), summary(1, "suspici"), summary(2, "reliabl")],
            &items(),
        )
        .unwrap();
        assert_eq!(set.concept_slots, ["system performance"]);
        assert_eq!(set.rejected.len(), 2);
        assert_eq!(set.rejected[0].provenance, Provenance::Cluster { cluster_id: 1 });
        assert!(set.rejected[0].reason.contains("suspici"));
        assert!(set.rejected[1].text.contains("reliable"));
    }

    #[test]
    fn duplicate_concepts_deduplicated() {
        let set = build(&[summary(0, "perform"), summary(1, "perform")], &items()).unwrap();
        assert_eq!(set.conceptual.len(), 1);
        assert!(set.rejected[0].reason.starts_with("duplicate concept"));
    }

    #[test]
    fn all_rejected_is_an_error() {
        assert!(matches!(
            build(&[summary(0, "suspici")], &items()),
            Err(PromptError::NoConceptualPrompts)
        ));
        assert!(matches!(build(&[], &items()), Err(PromptError::EmptySummaries)));
    }

    #[test]
    fn descriptive_balanced_in_item_order() {
        let set = build(&[summary(0, "perform")], &items()).unwrap();
        assert_eq!(set.descriptive_balance(), (2, 2));
        let ids: Vec<_> = set
            .descriptive
            .iter()
            .map(|p| match &p.provenance {
                Provenance::Item { item_id, .. } => item_id.as_str(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(ids, ["s-01", "s-02", "s-03", "s-06"]);
        let one_sided = vec![items()[0].clone(), items()[2].clone()];
        let set = build(&[summary(0, "perform")], &one_sided).unwrap();
        assert_eq!(set.descriptive_balance(), (1, 0));
        assert!(matches!(
            build(&[summary(0, "perform")], &[]),
            Err(PromptError::NoDescriptivePrompts)
        ));
    }

    #[test]
    fn json_round_trip_and_determinism() {
        let summaries = [summary(1, "process"), summary(0, "perform")];
        let a = build(&summaries, &items()).unwrap();
        let b = build(&summaries, &items()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.concept_slots[0], "system performance");
        assert_eq!(PromptSet::from_json(&a.to_json()).unwrap(), a);
        assert!(a.contains_text("Can you tell me your thoughts on system process?"));
    }
}
