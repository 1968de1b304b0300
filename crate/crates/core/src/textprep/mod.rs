//! Text normalization shared by the prompt pipeline and the intent
//! classifier: lowercasing, contraction folding, tokenization, stopword
//! removal and Porter stemming.

mod porter;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use porter::porter_stem;

use crate::resources;

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("no tokens left after preprocessing")]
    EmptyAfterPreprocessing,
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub stem: String,
    /// Index of the token in the tokenizer output for its source text.
    pub position: usize,
}

/// Contractions folded into a single token before splitting, so that
/// negations survive as one word.
const CONTRACTIONS: &[(&str, &str)] = &[
    ("ain't", "aint"),
    ("aren't", "arent"),
    ("can't", "cant"),
    ("couldn't", "couldnt"),
    ("didn't", "didnt"),
    ("doesn't", "doesnt"),
    ("don't", "dont"),
    ("hadn't", "hadnt"),
    ("hasn't", "hasnt"),
    ("haven't", "havent"),
    ("isn't", "isnt"),
    ("mustn't", "mustnt"),
    ("needn't", "neednt"),
    ("shouldn't", "shouldnt"),
    ("wasn't", "wasnt"),
    ("weren't", "werent"),
    ("won't", "wont"),
    ("wouldn't", "wouldnt"),
];

/// Folds a lowercase character to ASCII. Letters without an entry are
/// dropped and act as separators.
fn fold_char(c: char) -> Option<&'static str> {
    Some(match c {
        'à' | 'á' | 'â' | 'ã' | 'ä' | 'å' => "a",
        'æ' => "ae",
        'ç' => "c",
        'è' | 'é' | 'ê' | 'ë' => "e",
        'ì' | 'í' | 'î' | 'ï' => "i",
        'ñ' => "n",
        'ò' | 'ó' | 'ô' | 'õ' | 'ö' | 'ø' => "o",
        'œ' => "oe",
        'ß' => "ss",
        'ù' | 'ú' | 'û' | 'ü' => "u",
        'ý' | 'ÿ' => "y",
        _ => return None,
    })
}

/// Lowercases, folds accents and normalizes typographic apostrophes.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars().flat_map(char::to_lowercase) {
        match c {
            'a'..='z' | '\'' => out.push(c),
            '\u{2019}' | '\u{2018}' | '`' => out.push('\''),
            c if c.is_ascii() => out.push(' '),
            c => match fold_char(c) {
                Some(s) => out.push_str(s),
                None => out.push(' '),
            },
        }
    }
    out
}

/// Splits text into lowercase alphabetic tokens. Known contractions become
/// one token ("don't" -> "dont"); every other apostrophe splits.
pub fn tokenize(text: &str) -> Vec<Token> {
    let normalized = normalize(text);
    let mut surfaces: Vec<&str> = Vec::new();
    for chunk in normalized.split(' ').filter(|c| !c.is_empty()) {
        let trimmed = chunk.trim_matches('\'');
        if let Some((_, folded)) = CONTRACTIONS.iter().find(|(c, _)| *c == trimmed) {
            surfaces.push(folded);
        } else {
            surfaces.extend(trimmed.split('\'').filter(|s| !s.is_empty()));
        }
    }
    surfaces
        .into_iter()
        .enumerate()
        .map(|(position, surface)| Token {
            surface: surface.to_string(),
            stem: porter_stem(surface),
            position,
        })
        .collect()
}

/// A set of lowercase words to drop before embedding.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stoplist {
    words: BTreeSet<String>,
}

impl Stoplist {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            words: words.into_iter().map(|w| w.into().to_lowercase()).collect(),
        }
    }

    /// The stoplist shipped with the crate.
    pub fn bundled() -> Self {
        Self::new(resources::parse_word_list(resources::STOPLIST))
    }

    pub fn load(path: &Path) -> Result<Self, TextprepError> {
        let text = std::fs::read_to_string(path).map_err(|source| TextprepError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::new(resources::parse_word_list(&text)))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn remove_stopwords(tokens: Vec<Token>, stoplist: &Stoplist) -> Vec<Token> {
    tokens.into_iter().filter(|t| !stoplist.contains(&t.surface)).collect()
}

/// Full preprocessing of one text: tokenize, drop stopwords, keep stems.
pub fn preprocess_text(text: &str, stoplist: &Stoplist) -> Vec<Token> {
    remove_stopwords(tokenize(text), stoplist)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    counts: BTreeMap<String, u64>,
    total: u64,
}

impl BagOfWords {
    pub fn add(&mut self, stem: &str) {
        *self.counts.entry(stem.to_string()).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, stem: &str) -> u64 {
        self.counts.get(stem).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Preprocessed corpus: the bag of words plus per-item stem streams, which
/// keep item boundaries for windowed co-occurrence counting.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedCorpus {
    pub bag: BagOfWords,
    pub streams: Vec<Vec<String>>,
    /// Most frequent surface form of each stem (ties go to the
    /// lexicographically smallest surface).
    pub surfaces: BTreeMap<String, String>,
}

impl PreprocessedCorpus {
    pub fn display_form<'a>(&'a self, stem: &'a str) -> &'a str {
        self.surfaces.get(stem).map(String::as_str).unwrap_or(stem)
    }
}

pub fn preprocess_texts<'a, I>(texts: I, stoplist: &Stoplist) -> Result<PreprocessedCorpus, TextprepError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut bag = BagOfWords::default();
    let mut streams = Vec::new();
    let mut surface_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    for text in texts {
        let tokens = preprocess_text(text, stoplist);
        let mut stream = Vec::with_capacity(tokens.len());
        for token in tokens {
            bag.add(&token.stem);
            *surface_counts
                .entry(token.stem.clone())
                .or_default()
                .entry(token.surface)
                .or_insert(0) += 1;
            stream.push(token.stem);
        }
        streams.push(stream);
    }
    if bag.total() == 0 {
        return Err(TextprepError::EmptyAfterPreprocessing);
    }
    let surfaces = surface_counts
        .into_iter()
        .map(|(stem, forms)| {
            // max_by_key keeps the last maximum; iterate in reverse so the
            // smallest surface wins ties.
            let best = forms
                .iter()
                .rev()
                .max_by_key(|(_, n)| **n)
                .map(|(s, _)| s.clone())
                .unwrap_or_else(|| stem.clone());
            (stem, best)
        })
        .collect();
    Ok(PreprocessedCorpus { bag, streams, surfaces })
}

/// Preprocesses every item of a prompt database in database order.
pub fn preprocess_corpus(
    db: &crate::scale_ranking::PromptDatabase,
    stoplist: &Stoplist,
) -> Result<PreprocessedCorpus, TextprepError> {
    preprocess_texts(db.items.iter().map(|i| i.item.text.as_str()), stoplist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        let tokens = tokenize("The system is suspicious.");
        assert_eq!(surfaces(&tokens), ["the", "system", "is", "suspicious"]);
        assert_eq!(tokens.iter().map(|t| t.position).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert_eq!(tokens[3].stem, "suspici");
    }

    #[test]
    fn tokenize_empty() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  ,.;  ").is_empty());
    }

    #[test]
    fn contractions_fold() {
        assert_eq!(surfaces(&tokenize("don't")), ["dont"]);
        assert_eq!(
            surfaces(&tokenize("I don\u{2019}t really like it")),
            ["i", "dont", "really", "like", "it"]
        );
        assert_eq!(surfaces(&tokenize("It ISN'T")), ["it", "isnt"]);
        assert_eq!(
            surfaces(&tokenize("the system's actions")),
            ["the", "system", "s", "actions"]
        );
    }

    #[test]
    fn accents_fold_and_unknown_letters_split() {
        assert_eq!(surfaces(&tokenize("Alsaïd café")), ["alsaid", "cafe"]);
        assert_eq!(surfaces(&tokenize("a\u{3b1}b")), ["a", "b"]);
    }

    #[test]
    fn stopwords_removed_in_order() {
        let stop = Stoplist::bundled();
        let kept = remove_stopwords(tokenize("The system is suspicious"), &stop);
        assert_eq!(surfaces(&kept), ["system", "suspicious"]);
        let none = remove_stopwords(tokenize("The system is suspicious"), &Stoplist::default());
        assert_eq!(none.len(), 4);
        assert!(remove_stopwords(tokenize("the is a"), &stop).is_empty());
    }

    #[test]
    fn bundled_stoplist_is_desk_sized() {
        let stop = Stoplist::bundled();
        assert!((100..=140).contains(&stop.len()), "{}", stop.len());
        assert!(!stop.contains("system"));
    }

    #[test]
    fn preprocess_two_items() {
        let pre = preprocess_texts(
            ["The system is reliable", "The system is suspicious"],
            &Stoplist::bundled(),
        )
        .unwrap();
        assert_eq!(pre.bag.count("system"), 2);
        assert_eq!(pre.bag.count("reliabl"), 1);
        assert_eq!(pre.bag.count("suspici"), 1);
        assert_eq!(pre.bag.total(), 4);
        assert_eq!(pre.bag.len(), 3);
        assert_eq!(pre.streams, vec![vec!["system", "reliabl"], vec!["system", "suspici"]]);
        assert_eq!(pre.display_form("reliabl"), "reliable");
    }

    #[test]
    fn preprocess_empty_item_fails() {
        let err = preprocess_texts([""], &Stoplist::bundled()).unwrap_err();
        assert!(matches!(err, TextprepError::EmptyAfterPreprocessing));
    }

    #[test]
    fn duplicate_items_double_counts() {
        let stop = Stoplist::bundled();
        let once = preprocess_texts(["the robot acts consistently"], &stop).unwrap();
        let twice = preprocess_texts(["the robot acts consistently"; 2], &stop).unwrap();
        for (stem, n) in once.bag.counts() {
            assert_eq!(twice.bag.count(stem), 2 * n);
        }
        assert_eq!(twice.bag.total(), 2 * once.bag.total());
    }
}
