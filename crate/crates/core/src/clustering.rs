//! Agglomerative hierarchical clustering of word vectors with Lance–Williams
//! distance updates, and tree cutting into flat clusters.
//!
//! Leaves are numbered `0..n`; the cluster created by merge `s` gets id
//! `n + s`. Among equally close pairs, the pair with the smallest
//! `(left id, right id)` is merged first, which makes the dendrogram a
//! deterministic function of the distance matrix.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingTable};

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("word `{0}` has no vector")]
    UnknownWord(String),
    #[error("need at least 2 items to cluster, got {0}")]
    TooFewItems(usize),
    #[error("word `{0}` has a zero vector; cosine distance is undefined")]
    ZeroVector(String),
    #[error("Ward linkage requires the Euclidean metric")]
    WardRequiresEuclidean,
    #[error("k = {k} is outside 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("threshold {0} is not a number")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// 1 − cosine similarity.
    #[default]
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
    Ward,
}

impl Linkage {
    pub const ALL: [Linkage; 4] = [Linkage::Single, Linkage::Complete, Linkage::Average, Linkage::Ward];
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        })
    }
}

impl std::str::FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Linkage::ALL
            .into_iter()
            .find(|l| l.to_string() == s)
            .ok_or_else(|| format!("unknown linkage `{s}`"))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            _ => Err(format!("unknown metric `{s}`")),
        }
    }
}

/// Symmetric pairwise distances with a zero diagonal, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    metric: Metric,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Pairwise distances between raw points.
    pub fn from_points(points: &[Vec<f64>], metric: Metric) -> Result<Self, ClusteringError> {
        let n = points.len();
        if metric == Metric::Cosine {
            if let Some(i) = points.iter().position(|p| norm(p) == 0.0) {
                return Err(ClusteringError::ZeroVector(format!("point {i}")));
            }
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = match metric {
                    Metric::Euclidean => euclidean(&points[i], &points[j]),
                    Metric::Cosine => 1.0 - cosine_similarity(&points[i], &points[j]).expect("non-zero, same length"),
                };
                entries[i * n + j] = d;
                entries[j * n + i] = d;
            }
        }
        Ok(Self { n, metric, entries })
    }

    /// Wraps a dense row-major matrix, which must be symmetric and
    /// non-negative with a zero diagonal.
    pub fn from_entries(n: usize, metric: Metric, entries: Vec<f64>) -> Option<Self> {
        if entries.len() != n * n {
            return None;
        }
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return None;
            }
            for j in 0..n {
                let x = entries[i * n + j];
                if !(x >= 0.0 && x.is_finite()) || x != entries[j * n + i] {
                    return None;
                }
            }
        }
        Some(Self { n, metric, entries })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn distance_matrix(
    table: &EmbeddingTable,
    words: &[String],
    metric: Metric,
) -> Result<DistanceMatrix, ClusteringError> {
    if words.len() < 2 {
        return Err(ClusteringError::TooFewItems(words.len()));
    }
    let points = words
        .iter()
        .map(|w| {
            let v = table.get(w).ok_or_else(|| ClusteringError::UnknownWord(w.clone()))?;
            if metric == Metric::Cosine && norm(v) == 0.0 {
                return Err(ClusteringError::ZeroVector(w.clone()));
            }
            Ok(v.to_vec())
        })
        .collect::<Result<Vec<_>, _>>()?;
    DistanceMatrix::from_points(&points, metric)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub id: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<String>,
    pub merges: Vec<Merge>,
    pub linkage: Linkage,
}

impl Dendrogram {
    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn root_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }

    /// `merge_index left right height size`, one merge per line.
    pub fn write_table<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "merge_index left right height size")?;
        for (i, m) in self.merges.iter().enumerate() {
            writeln!(out, "{i} {} {} {} {}", m.left, m.right, m.height, m.size)?;
        }
        Ok(())
    }
}

/// Agglomerates `dist` bottom-up. Ward runs its update on squared Euclidean
/// distances and reports heights on the unsquared scale.
pub fn agglomerate(
    dist: &DistanceMatrix,
    linkage: Linkage,
    leaves: Vec<String>,
) -> Result<Dendrogram, ClusteringError> {
    let n = dist.len();
    if n < 2 {
        return Err(ClusteringError::TooFewItems(n));
    }
    if linkage == Linkage::Ward && dist.metric() != Metric::Euclidean {
        return Err(ClusteringError::WardRequiresEuclidean);
    }
    assert_eq!(leaves.len(), n, "one label per leaf");

    let mut d: Vec<f64> = dist.entries.clone();
    if linkage == Linkage::Ward {
        d.iter_mut().for_each(|x| *x *= *x);
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut node = (0..n).collect::<Vec<usize>>();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let (a, b) = closest_pair(&active, |x, y| d[x * n + y], |x| node[x]);
        let d_ab = d[a * n + b];
        let (left, right) = (node[a].min(node[b]), node[a].max(node[b]));
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for &k in active.iter().filter(|&&k| k != a && k != b) {
            let (d_ka, d_kb) = (d[k * n + a], d[k * n + b]);
            let nk = size[k] as f64;
            let updated = match linkage {
                Linkage::Single => d_ka.min(d_kb),
                Linkage::Complete => d_ka.max(d_kb),
                Linkage::Average => (na * d_ka + nb * d_kb) / (na + nb),
                Linkage::Ward => ((na + nk) * d_ka + (nb + nk) * d_kb - nk * d_ab) / (na + nb + nk),
            };
            d[k * n + a] = updated;
            d[a * n + k] = updated;
        }
        let height = if linkage == Linkage::Ward {
            d_ab.max(0.0).sqrt()
        } else {
            d_ab
        };
        size[a] += size[b];
        node[a] = n + step;
        active.retain(|&s| s != b);
        merges.push(Merge {
            left,
            right,
            height,
            id: n + step,
            size: size[a],
        });
    }
    Ok(Dendrogram {
        leaves,
        merges,
        linkage,
    })
}

/// Distance, ordered node ids, and the slot pair they came from.
type Candidate = (f64, (usize, usize), (usize, usize));

/// Finds the active pair with the smallest distance; ties go to the
/// smallest (min node id, max node id).
pub(crate) fn closest_pair(
    active: &[usize],
    distance: impl Fn(usize, usize) -> f64,
    node_id: impl Fn(usize) -> usize,
) -> (usize, usize) {
    let mut best: Option<Candidate> = None;
    for (idx, &x) in active.iter().enumerate() {
        for &y in &active[idx + 1..] {
            let dxy = distance(x, y);
            let ids = (node_id(x).min(node_id(y)), node_id(x).max(node_id(y)));
            let better = match &best {
                None => true,
                Some((bd, bids, _)) => dxy < *bd || (dxy == *bd && ids < *bids),
            };
            if better {
                best = Some((dxy, ids, (x, y)));
            }
        }
    }
    best.expect("at least two active clusters").2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cut {
    Height(f64),
    Clusters(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatClustering {
    pub words: Vec<String>,
    /// Cluster id per word, aligned with `words`.
    pub assignment: Vec<usize>,
    pub k: usize,
    pub cut: Cut,
}

impl FlatClustering {
    pub fn members(&self, cluster: usize) -> Vec<&str> {
        self.words
            .iter()
            .zip(&self.assignment)
            .filter(|(_, &c)| c == cluster)
            .map(|(w, _)| w.as_str())
            .collect()
    }

    pub fn clusters(&self) -> Vec<Vec<&str>> {
        (0..self.k).map(|c| self.members(c)).collect()
    }

    /// `word cluster_id` lines.
    pub fn write_assignments<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (w, c) in self.words.iter().zip(&self.assignment) {
            writeln!(out, "{w} {c}")?;
        }
        Ok(())
    }
}

/// Flattens the dendrogram. A height cut keeps every merge at or below the
/// threshold; a k cut keeps the first n − k merges. Cluster ids follow the
/// smallest leaf index in each cluster.
pub fn cut_tree(dgm: &Dendrogram, cut: Cut) -> Result<FlatClustering, ClusteringError> {
    let n = dgm.len();
    let applied: Vec<bool> = match cut {
        Cut::Clusters(k) => {
            if k == 0 || k > n {
                return Err(ClusteringError::InvalidK { k, n });
            }
            (0..dgm.merges.len()).map(|i| i < n - k).collect()
        }
        Cut::Height(h) => {
            if h.is_nan() {
                return Err(ClusteringError::InvalidThreshold(h));
            }
            dgm.merges.iter().map(|m| m.height <= h).collect()
        }
    };

    let mut parent: Vec<Option<usize>> = vec![None; n + dgm.merges.len()];
    for (m, keep) in dgm.merges.iter().zip(&applied) {
        if *keep {
            parent[m.left] = Some(m.id);
            parent[m.right] = Some(m.id);
        }
    }
    let root = |mut x: usize| {
        while let Some(p) = parent[x] {
            x = p;
        }
        x
    };
    let mut label_of_root = std::collections::HashMap::new();
    let mut assignment = Vec::with_capacity(n);
    for leaf in 0..n {
        let next = label_of_root.len();
        assignment.push(*label_of_root.entry(root(leaf)).or_insert(next));
    }
    Ok(FlatClustering {
        words: dgm.leaves.clone(),
        k: label_of_root.len(),
        assignment,
        cut,
    })
}
