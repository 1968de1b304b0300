//! Positive/negative valence lexicons and negation markers. One instance
//! feeds both the prompt lint and the respondent intent classifier.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::resources;
use crate::textprep::tokenize;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{0} lexicon is empty")]
    Empty(&'static str),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
    negation: BTreeSet<String>,
}

/// Runs each entry through the shared tokenizer; valence entries keep
/// stems, negation entries keep normalized surfaces.
fn normalize_entries(words: &[String], stems: bool) -> BTreeSet<String> {
    words
        .iter()
        .flat_map(|w| tokenize(w))
        .map(|t| if stems { t.stem } else { t.surface })
        .collect()
}

impl ValenceLexicon {
    pub fn new(positive: &[String], negative: &[String], negation: &[String]) -> Result<Self, LexiconError> {
        let lexicon = Self {
            positive: normalize_entries(positive, true),
            negative: normalize_entries(negative, true),
            negation: normalize_entries(negation, false),
        };
        if lexicon.positive.is_empty() {
            return Err(LexiconError::Empty("positive"));
        }
        if lexicon.negative.is_empty() {
            return Err(LexiconError::Empty("negative"));
        }
        if lexicon.negation.is_empty() {
            return Err(LexiconError::Empty("negation"));
        }
        Ok(lexicon)
    }

    pub fn bundled() -> Self {
        Self::new(
            &resources::parse_word_list(resources::POSITIVE),
            &resources::parse_word_list(resources::NEGATIVE),
            &resources::parse_word_list(resources::NEGATION),
        )
        .expect("bundled lexicons are non-empty")
    }

    /// Loads `positive.txt`, `negative.txt` and `negation.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, LexiconError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path)
                .map(|text| resources::parse_word_list(&text))
                .map_err(|source| LexiconError::Io {
                    path: path.display().to_string(),
                    source,
                })
        };
        Self::new(&read("positive.txt")?, &read("negative.txt")?, &read("negation.txt")?)
    }

    /// +1 for a positive stem, −1 for a negative stem, 0 otherwise.
    pub fn polarity(&self, stem: &str) -> i32 {
        if self.positive.contains(stem) {
            1
        } else if self.negative.contains(stem) {
            -1
        } else {
            0
        }
    }

    pub fn is_valenced(&self, stem: &str) -> bool {
        self.polarity(stem) != 0
    }

    pub fn is_negation(&self, surface: &str) -> bool {
        self.negation.contains(surface)
    }

    pub fn positive(&self) -> &BTreeSet<String> {
        &self.positive
    }

    pub fn negative(&self) -> &BTreeSet<String> {
        &self.negative
    }
}
