//! Trust-scale corpus: data model, JSON ingestion, validation and filtering.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::resources;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "automation")]
    Automation,
    #[serde(rename = "e-commerce")]
    ECommerce,
    #[serde(rename = "human")]
    Human,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Automation, Domain::ECommerce, Domain::Human];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Automation => "automation",
            Domain::ECommerce => "e-commerce",
            Domain::Human => "human",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Construct {
    #[serde(rename = "dispositional")]
    Dispositional,
    #[serde(rename = "history-based")]
    HistoryBased,
    #[serde(rename = "situational")]
    Situational,
}

impl Construct {
    pub const ALL: [Construct; 3] = [
        Construct::Dispositional,
        Construct::HistoryBased,
        Construct::Situational,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Construct::Dispositional => "dispositional",
            Construct::HistoryBased => "history-based",
            Construct::Situational => "situational",
        }
    }
}

impl fmt::Display for Construct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Construct {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Construct::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown construct `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Positive,
    Negative,
    #[default]
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleItem {
    pub item_id: String,
    pub text: String,
    #[serde(default)]
    pub valence: Valence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scale {
    pub scale_id: String,
    pub name: String,
    pub year: i32,
    /// Signed so that a bad count can be loaded and reported by
    /// [`validate_corpus`] rather than rejected by the parser.
    pub citations: i64,
    pub domain: Domain,
    pub construct: Construct,
    pub items: Vec<ScaleItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleCorpus {
    pub scales: Vec<Scale>,
    #[serde(default)]
    pub source_note: String,
}

impl ScaleCorpus {
    /// The synthetic mini-corpus shipped with the crate.
    pub fn bundled() -> Self {
        parse_corpus(resources::CORPUS).expect("bundled corpus is valid")
    }

    pub fn get(&self, scale_id: &str) -> Option<&Scale> {
        self.scales.iter().find(|s| s.scale_id == scale_id)
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.scales.iter().map(|s| s.items.len()).sum()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus contains no scales")]
    MissingScales,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("malformed record at {locator}: {message}")]
    MalformedRecord { locator: String, message: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn malformed(locator: impl Into<String>, message: impl fmt::Display) -> CorpusError {
    CorpusError::MalformedRecord {
        locator: locator.into(),
        message: message.to_string(),
    }
}

pub fn load_corpus(path: &Path) -> Result<ScaleCorpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

/// Parses the corpus JSON document. Each scale is decoded on its own so the
/// error can point at the offending record.
pub fn parse_corpus(text: &str) -> Result<ScaleCorpus, CorpusError> {
    if text.trim().is_empty() {
        return Err(CorpusError::MissingScales);
    }
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| malformed(format!("line {}, column {}", e.line(), e.column()), e))?;
    let object = root
        .as_object()
        .ok_or_else(|| malformed("document root", "expected a JSON object"))?;
    if let Some(key) = object.keys().find(|k| *k != "scales" && *k != "source_note") {
        return Err(malformed("document root", format!("unknown field `{key}`")));
    }
    let source_note = match object.get("source_note") {
        None => String::new(),
        Some(serde_json::Value::String(s)) => s.clone(),
        Some(_) => return Err(malformed("source_note", "expected a string")),
    };
    let records = match object.get("scales") {
        None => return Err(CorpusError::MissingScales),
        Some(serde_json::Value::Array(records)) => records,
        Some(_) => return Err(malformed("scales", "expected an array")),
    };
    if records.is_empty() {
        return Err(CorpusError::MissingScales);
    }

    let mut scales = Vec::with_capacity(records.len());
    let mut seen = HashSet::new();
    for (index, record) in records.iter().enumerate() {
        let scale: Scale = serde_json::from_value(record.clone()).map_err(|e| {
            let id = record.get("scale_id").and_then(|v| v.as_str()).unwrap_or("?");
            malformed(format!("scales[{index}] ({id})"), e)
        })?;
        if !seen.insert(scale.scale_id.clone()) {
            return Err(CorpusError::DuplicateId(scale.scale_id));
        }
        let mut item_ids = HashSet::new();
        for item in &scale.items {
            if !item_ids.insert(item.item_id.as_str()) {
                return Err(CorpusError::DuplicateId(format!("{}/{}", scale.scale_id, item.item_id)));
            }
        }
        scales.push(scale);
    }
    let corpus = ScaleCorpus { scales, source_note };
    if let Some(v) = validate_corpus(&corpus).into_iter().next() {
        return Err(malformed(
            format!("scale `{}`, field `{}`", v.scale_id, v.field),
            v.rule,
        ));
    }
    Ok(corpus)
}

pub fn save_corpus(corpus: &ScaleCorpus, path: &Path) -> Result<(), CorpusError> {
    let json = serde_json::to_string_pretty(corpus).expect("corpus serializes");
    std::fs::write(path, json + "\n").map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub scale_id: String,
    pub field: String,
    pub rule: String,
}

pub fn validate_corpus(corpus: &ScaleCorpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |scale_id: &str, field: &str, rule: &str| {
        out.push(Violation {
            scale_id: scale_id.to_string(),
            field: field.to_string(),
            rule: rule.to_string(),
        })
    };
    if corpus.scales.is_empty() {
        push("", "scales", "corpus non-empty");
    }
    let mut seen = HashSet::new();
    for scale in &corpus.scales {
        let id = scale.scale_id.as_str();
        if id.is_empty() {
            push(id, "scale_id", "scale_id non-empty");
        }
        if !seen.insert(id) {
            push(id, "scale_id", "scale_id unique");
        }
        if scale.citations < 0 {
            push(id, "citations", "citations ≥ 0");
        }
        if scale.items.is_empty() {
            push(id, "items", "items non-empty");
        }
        let mut item_ids = HashSet::new();
        for item in &scale.items {
            if item.item_id.is_empty() {
                push(id, "items.item_id", "item_id non-empty");
            }
            if !item_ids.insert(item.item_id.as_str()) {
                push(id, "items.item_id", "item_id unique within scale");
            }
            if item.text.trim().is_empty() {
                push(id, "items.text", "text non-empty");
            }
        }
    }
    out
}

/// Keeps the scales matching every supplied criterion, in corpus order.
pub fn filter_scales(corpus: &ScaleCorpus, domain: Option<Domain>, construct: Option<Construct>) -> ScaleCorpus {
    ScaleCorpus {
        scales: corpus
            .scales
            .iter()
            .filter(|s| domain.is_none_or(|d| s.domain == d))
            .filter(|s| construct.is_none_or(|c| s.construct == c))
            .cloned()
            .collect(),
        source_note: corpus.source_note.clone(),
    }
}
