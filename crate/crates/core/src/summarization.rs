//! Centroid-based summarization of word clusters: each cluster's
//! frequency-weighted centroid is matched against candidate terms by cosine
//! similarity, and the best candidate becomes the cluster's concept slot.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::FlatClustering;
use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingTable};
use crate::resources;

/// Ranked terms kept per cluster in the report.
pub const DEFAULT_RANKED_TERMS: usize = 5;

#[derive(Debug, Error)]
pub enum SummarizationError {
    #[error("word `{0}` has no vector")]
    UnknownWord(String),
    #[error("cluster has no members")]
    EmptyCluster,
    #[error("cluster weights sum to zero")]
    ZeroWeight,
    #[error("centroid is the zero vector")]
    ZeroVector,
    #[error("no candidate term has a usable vector")]
    NoCandidates,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("concept lexicon: {0}")]
    Lexicon(String),
}

/// Curated concept stems with their human-readable display forms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptLexicon {
    display: BTreeMap<String, String>,
}

impl ConceptLexicon {
    pub fn new(display: BTreeMap<String, String>) -> Self {
        Self { display }
    }

    pub fn bundled() -> Self {
        Self::parse(resources::CONCEPTS).expect("bundled concept lexicon parses")
    }

    pub fn parse(json: &str) -> Result<Self, SummarizationError> {
        serde_json::from_str(json).map_err(|e| SummarizationError::Lexicon(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SummarizationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SummarizationError::Lexicon(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn stems(&self) -> impl Iterator<Item = &str> {
        self.display.keys().map(String::as_str)
    }

    pub fn display(&self, stem: &str) -> Option<&str> {
        self.display.get(stem).map(String::as_str)
    }
}

/// Weighted mean of the members' vectors. Members are summed in sorted
/// order, so the result does not depend on member order. Without weights
/// every member counts once; with weights, a member missing from the map
/// counts zero.
pub fn cluster_centroid(
    members: &[&str],
    table: &EmbeddingTable,
    weights: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<f64>, SummarizationError> {
    if members.is_empty() {
        return Err(SummarizationError::EmptyCluster);
    }
    let mut sorted: Vec<&str> = members.to_vec();
    sorted.sort_unstable();
    let mut sum = vec![0.0; table.dim()];
    let mut total = 0.0;
    for word in sorted {
        let v = table
            .get(word)
            .ok_or_else(|| SummarizationError::UnknownWord(word.to_string()))?;
        let w = weights.map_or(1.0, |ws| ws.get(word).copied().unwrap_or(0.0));
        for (s, x) in sum.iter_mut().zip(v) {
            *s += w * x;
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(SummarizationError::ZeroWeight);
    }
    sum.iter_mut().for_each(|s| *s /= total);
    Ok(sum)
}

/// Top-`k` candidates by cosine similarity to the centroid, ties broken by
/// term. Candidates without a vector (or with a zero vector) are skipped.
pub fn nearest_terms(
    centroid: &[f64],
    candidates: &[&str],
    table: &EmbeddingTable,
    k: usize,
) -> Result<Vec<(String, f64)>, SummarizationError> {
    if k == 0 {
        return Err(SummarizationError::InvalidK);
    }
    if centroid.iter().all(|x| *x == 0.0) {
        return Err(SummarizationError::ZeroVector);
    }
    let unique: BTreeSet<&str> = candidates.iter().copied().collect();
    let mut scored = Vec::new();
    for term in unique {
        let Some(v) = table.get(term) else { continue };
        match cosine_similarity(centroid, v) {
            Ok(sim) => scored.push((term.to_string(), sim)),
            Err(EmbeddingError::ZeroVector) => continue,
            Err(_) => return Err(SummarizationError::UnknownWord(term.to_string())),
        }
    }
    if scored.is_empty() {
        return Err(SummarizationError::NoCandidates);
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub members: Vec<String>,
    pub centroid: Vec<f64>,
    pub centroid_norm: f64,
    pub ranked_terms: Vec<(String, f64)>,
    pub selected_term: String,
}

/// One summary per cluster. Candidates are the cluster's members plus the
/// concept lexicon stems.
pub fn summarize_cut(
    clustering: &FlatClustering,
    table: &EmbeddingTable,
    concepts: &ConceptLexicon,
    weights: Option<&BTreeMap<String, f64>>,
    ranked_terms: usize,
) -> Result<Vec<ClusterSummary>, SummarizationError> {
    (0..clustering.k)
        .map(|cluster_id| {
            let mut members = clustering.members(cluster_id);
            members.sort_unstable();
            let centroid = cluster_centroid(&members, table, weights)?;
            let candidates: Vec<&str> = members.iter().copied().chain(concepts.stems()).collect();
            let ranked = nearest_terms(&centroid, &candidates, table, ranked_terms)?;
            Ok(ClusterSummary {
                cluster_id,
                members: members.iter().map(|m| m.to_string()).collect(),
                centroid_norm: centroid.iter().map(|x| x * x).sum::<f64>().sqrt(),
                centroid,
                selected_term: ranked[0].0.clone(),
                ranked_terms: ranked,
            })
        })
        .collect()
}
