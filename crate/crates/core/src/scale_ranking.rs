//! Scale selection: domain-word log-odds scoring, citation ranking and the
//! union of the ranked tracks into the prompt database.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{validate_corpus, Domain, Scale, ScaleCorpus, ScaleItem};
use crate::resources;
use crate::textprep::{preprocess_text, Stoplist};

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("scale `{0}` has no tokens after preprocessing")]
    EmptyScaleText(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("lexicon term `{0}` is not a lowercase stem")]
    InvalidTerm(String),
    #[error("top_n must be at least 1")]
    InvalidTopN,
    #[error("{scales} scales but {scores} scores")]
    LengthMismatch { scales: usize, scores: usize },
    #[error("unknown scale id `{0}`")]
    UnknownScaleId(String),
    #[error("extra scale `{scale_id}` is invalid: {rule}")]
    InvalidExtra { scale_id: String, rule: String },
    #[error("extra scale `{0}` duplicates a selected scale")]
    DuplicateExtra(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Stemmed terms that mark a scale as belonging to a domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainLexicon {
    pub domain: Domain,
    terms: BTreeSet<String>,
}

impl DomainLexicon {
    pub fn new<I, S>(domain: Domain, terms: I) -> Result<Self, RankingError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let terms: BTreeSet<String> = terms.into_iter().map(Into::into).collect();
        if terms.is_empty() {
            return Err(RankingError::EmptyLexicon);
        }
        if let Some(bad) = terms
            .iter()
            .find(|t| t.is_empty() || !t.bytes().all(|b| b.is_ascii_lowercase()))
        {
            return Err(RankingError::InvalidTerm(bad.clone()));
        }
        Ok(Self { domain, terms })
    }

    pub fn bundled(domain: Domain) -> Self {
        let text = match domain {
            Domain::Automation => resources::LEXICON_AUTOMATION,
            Domain::ECommerce => resources::LEXICON_ECOMMERCE,
            Domain::Human => resources::LEXICON_HUMAN,
        };
        Self::new(domain, resources::parse_word_list(text)).expect("bundled lexicon is valid")
    }

    pub fn load(domain: Domain, path: &Path) -> Result<Self, RankingError> {
        let text = std::fs::read_to_string(path).map_err(|source| RankingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::new(domain, resources::parse_word_list(&text))
    }

    pub fn contains(&self, stem: &str) -> bool {
        self.terms.contains(stem)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

/// Smoothed log-odds of `k` domain tokens among `n`:
/// ln((k + 0.5) / (n − k + 0.5)).
pub fn log_odds(k: usize, n: usize) -> f64 {
    debug_assert!(k <= n);
    ((k as f64 + 0.5) / ((n - k) as f64 + 0.5)).ln()
}

/// Log-odds that a preprocessed token of the scale's items is a domain term.
pub fn domain_log_odds(scale: &Scale, lexicon: &DomainLexicon, stoplist: &Stoplist) -> Result<f64, RankingError> {
    let (k, n) = scale
        .items
        .iter()
        .flat_map(|item| preprocess_text(&item.text, stoplist))
        .fold((0, 0), |(k, n), token| {
            (k + usize::from(lexicon.contains(&token.stem)), n + 1)
        });
    if n == 0 {
        return Err(RankingError::EmptyScaleText(scale.scale_id.clone()));
    }
    Ok(log_odds(k, n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedScale {
    pub scale_id: String,
    pub log_odds_score: f64,
    pub citations: i64,
    pub rank: usize,
}

fn by_score_then_citations(a: &RankedScale, b: &RankedScale) -> Ordering {
    b.log_odds_score
        .total_cmp(&a.log_odds_score)
        .then(b.citations.cmp(&a.citations))
        .then_with(|| a.scale_id.cmp(&b.scale_id))
}

fn assign_ranks(mut ranked: Vec<RankedScale>, top_n: usize) -> Vec<RankedScale> {
    ranked.truncate(top_n);
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    ranked
}

/// Sorts by (score desc, citations desc, scale_id asc) and keeps the first
/// `top_n` with ranks 1..=n.
pub fn rank_scales(scales: &[Scale], scores: &[f64], top_n: usize) -> Result<Vec<RankedScale>, RankingError> {
    if top_n == 0 {
        return Err(RankingError::InvalidTopN);
    }
    if scales.len() != scores.len() {
        return Err(RankingError::LengthMismatch {
            scales: scales.len(),
            scores: scores.len(),
        });
    }
    let mut ranked: Vec<RankedScale> = scales
        .iter()
        .zip(scores)
        .map(|(s, &score)| RankedScale {
            scale_id: s.scale_id.clone(),
            log_odds_score: score,
            citations: s.citations,
            rank: 0,
        })
        .collect();
    ranked.sort_by(by_score_then_citations);
    Ok(assign_ranks(ranked, top_n))
}

/// Re-ranks an already ranked list by citations (desc). The sort is stable,
/// so equal citation counts keep their previous relative order.
pub fn rank_by_citations(ranked: &[RankedScale], top_n: usize) -> Result<Vec<RankedScale>, RankingError> {
    if top_n == 0 {
        return Err(RankingError::InvalidTopN);
    }
    let mut out = ranked.to_vec();
    out.sort_by_key(|r| std::cmp::Reverse(r.citations));
    Ok(assign_ranks(out, top_n))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseItem {
    pub scale_id: String,
    pub item: ScaleItem,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseProvenance {
    pub domain_track: Vec<String>,
    pub construct_track: Vec<String>,
    pub manual_additions: Vec<String>,
}

/// Union of the selected scales with their items flattened in
/// (scale_id asc, item order) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptDatabase {
    pub scales: Vec<Scale>,
    pub items: Vec<DatabaseItem>,
    pub provenance: DatabaseProvenance,
}

impl PromptDatabase {
    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub fn build_prompt_database(
    domain_track: &[RankedScale],
    construct_track: &[RankedScale],
    corpus: &ScaleCorpus,
    extra: &[Scale],
) -> Result<PromptDatabase, RankingError> {
    let extra_corpus = ScaleCorpus {
        scales: extra.to_vec(),
        source_note: String::new(),
    };
    if !extra.is_empty() {
        if let Some(v) = validate_corpus(&extra_corpus).into_iter().next() {
            return Err(RankingError::InvalidExtra {
                scale_id: v.scale_id,
                rule: v.rule,
            });
        }
    }

    let mut selected: BTreeMap<String, Scale> = BTreeMap::new();
    for ranked in domain_track.iter().chain(construct_track) {
        let scale = corpus
            .get(&ranked.scale_id)
            .ok_or_else(|| RankingError::UnknownScaleId(ranked.scale_id.clone()))?;
        selected.entry(scale.scale_id.clone()).or_insert_with(|| scale.clone());
    }
    for scale in extra {
        if selected.insert(scale.scale_id.clone(), scale.clone()).is_some() {
            return Err(RankingError::DuplicateExtra(scale.scale_id.clone()));
        }
    }

    let scales: Vec<Scale> = selected.into_values().collect();
    let items = scales
        .iter()
        .flat_map(|s| {
            s.items.iter().map(|item| DatabaseItem {
                scale_id: s.scale_id.clone(),
                item: item.clone(),
            })
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(
        items
            .iter()
            .map(|i| (&i.scale_id, &i.item.item_id))
            .collect::<HashSet<_>>()
            .len(),
        items.len()
    );
    Ok(PromptDatabase {
        scales,
        items,
        provenance: DatabaseProvenance {
            domain_track: domain_track.iter().map(|r| r.scale_id.clone()).collect(),
            construct_track: construct_track.iter().map(|r| r.scale_id.clone()).collect(),
            manual_additions: extra.iter().map(|s| s.scale_id.clone()).collect(),
        },
    })
}
