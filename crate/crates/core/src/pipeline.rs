//! End-to-end prompt generation: scale selection, preprocessing, word
//! embedding, clustering, summarization and prompt formulation, with each
//! failure tagged by the stage that produced it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::clustering::{agglomerate, cut_tree, distance_matrix, Cut, Dendrogram, FlatClustering, Linkage, Metric};
use crate::corpus::{filter_scales, load_corpus, Construct, Domain, ScaleCorpus};
use crate::embedding::{build_cooccurrence, load_vectors, train_glove, EmbeddingTable, GloveConfig, Weighting};
use crate::prompt_gen::{build_prompt_set, PromptSet, PromptSources, TemplateBank, DEFAULT_DESCRIPTIVE_PER_SIDE};
use crate::scale_ranking::{
    build_prompt_database, domain_log_odds, rank_by_citations, rank_scales, DomainLexicon, PromptDatabase, RankedScale,
};
use crate::summarization::{summarize_cut, ClusterSummary, ConceptLexicon, DEFAULT_RANKED_TERMS};
use crate::textprep::{preprocess_corpus, PreprocessedCorpus, Stoplist};
use crate::valence::ValenceLexicon;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    Filter,
    DomainRank,
    CitationRank,
    ConstructRank,
    Union,
    Preprocess,
    Embed,
    Cluster,
    Summarize,
    Formulate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Config => "config",
            Self::Ingest => "ingest",
            Self::Filter => "filter",
            Self::DomainRank => "domain-rank",
            Self::CitationRank => "citation-rank",
            Self::ConstructRank => "construct-rank",
            Self::Union => "union",
            Self::Preprocess => "preprocess",
            Self::Embed => "embed",
            Self::Cluster => "cluster",
            Self::Summarize => "summarize",
            Self::Formulate => "formulate",
            Self::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Box<dyn std::error::Error + Send + Sync>,
}

impl PipelineError {
    pub fn new(stage: Stage, source: impl Into<Box<dyn std::error::Error + Send + Sync>>) -> Self {
        Self {
            stage,
            source: source.into(),
        }
    }

    pub fn is_config(&self) -> bool {
        self.stage == Stage::Config
    }
}

fn at<E: Into<Box<dyn std::error::Error + Send + Sync>>>(stage: Stage) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::new(stage, e)
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no {0} scales in the corpus")]
    EmptySelection(Domain),
}

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("only {0} words have vectors; clustering needs at least 2")]
    TooFewWords(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingMode {
    Train,
    Pretrained(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// `None` uses the bundled corpus.
    pub corpus: Option<PathBuf>,
    pub domain: Domain,
    pub construct: Construct,
    pub top_n_domain: usize,
    pub top_n_construct: usize,
    /// Keep only this many scales from the log-odds ranking before the
    /// citation ranking; `None` keeps every domain scale.
    pub log_odds_shortlist: Option<usize>,
    pub domain_lexicon: Option<PathBuf>,
    pub stoplist: Option<PathBuf>,
    pub window: usize,
    pub weighting: Weighting,
    pub glove: GloveConfig,
    pub embedding: EmbeddingMode,
    /// Stems seen fewer times than this are not clustered.
    pub min_count: u64,
    pub metric: Metric,
    pub linkage: Linkage,
    pub cut: Cut,
    pub templates: Option<PathBuf>,
    pub concepts: Option<PathBuf>,
    /// Directory holding positive.txt, negative.txt and negation.txt.
    pub valence_dir: Option<PathBuf>,
    pub descriptive_per_side: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            domain: Domain::Automation,
            construct: Construct::Situational,
            top_n_domain: 9,
            top_n_construct: 3,
            log_odds_shortlist: None,
            domain_lexicon: None,
            stoplist: None,
            window: 5,
            weighting: Weighting::InverseDistance,
            glove: GloveConfig::default(),
            embedding: EmbeddingMode::Train,
            min_count: 2,
            metric: Metric::Cosine,
            linkage: Linkage::Average,
            cut: Cut::Clusters(6),
            templates: None,
            concepts: None,
            valence_dir: None,
            descriptive_per_side: DEFAULT_DESCRIPTIVE_PER_SIDE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::new(Stage::Config, msg));
        for (name, path) in [
            ("corpus", &self.corpus),
            ("domain lexicon", &self.domain_lexicon),
            ("stoplist", &self.stoplist),
            ("template bank", &self.templates),
            ("concept lexicon", &self.concepts),
            ("valence lexicon directory", &self.valence_dir),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return bad(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        if let EmbeddingMode::Pretrained(p) = &self.embedding {
            if !p.exists() {
                return bad(format!("pretrained vectors {} do not exist", p.display()));
            }
        }
        if self.top_n_domain == 0 || self.top_n_construct == 0 || self.log_odds_shortlist == Some(0) {
            return bad("top-n values must be at least 1".into());
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.min_count == 0 {
            return bad("min_count must be at least 1".into());
        }
        if self.descriptive_per_side == 0 {
            return bad("descriptive_per_side must be at least 1".into());
        }
        match self.cut {
            Cut::Clusters(0) => return bad("k must be at least 1".into()),
            Cut::Height(h) if !h.is_finite() || h < 0.0 => return bad(format!("invalid cut height {h}")),
            _ => {}
        }
        if self.linkage == Linkage::Ward && self.metric != Metric::Euclidean {
            return bad("ward linkage requires the euclidean metric".into());
        }
        self.glove.validate().map_err(at(Stage::Config))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleScore {
    pub scale_id: String,
    pub construct: Construct,
    pub citations: i64,
    pub log_odds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingReport {
    pub domain: Domain,
    pub construct: Construct,
    pub scores: Vec<ScaleScore>,
    pub log_odds_ranking: Vec<RankedScale>,
    pub domain_track: Vec<RankedScale>,
    pub construct_track: Vec<RankedScale>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub report: RankingReport,
    pub database: PromptDatabase,
}

pub fn load_input_corpus(config: &PipelineConfig) -> Result<ScaleCorpus, PipelineError> {
    match &config.corpus {
        Some(path) => load_corpus(path).map_err(at(Stage::Ingest)),
        None => Ok(ScaleCorpus::bundled()),
    }
}

fn stoplist(config: &PipelineConfig) -> Result<Stoplist, PipelineError> {
    match &config.stoplist {
        Some(p) => Stoplist::load(p).map_err(at(Stage::Config)),
        None => Ok(Stoplist::bundled()),
    }
}

/// Steps filter → log-odds rank → citation rank → construct rank → union.
pub fn select_scales(corpus: &ScaleCorpus, config: &PipelineConfig) -> Result<Selection, PipelineError> {
    let stoplist = stoplist(config)?;
    let lexicon = match &config.domain_lexicon {
        Some(p) => DomainLexicon::load(config.domain, p).map_err(at(Stage::Config))?,
        None => DomainLexicon::bundled(config.domain),
    };

    let domain_scales = filter_scales(corpus, Some(config.domain), None);
    if domain_scales.is_empty() {
        return Err(PipelineError::new(
            Stage::Filter,
            SelectionError::EmptySelection(config.domain),
        ));
    }

    let scores = domain_scales
        .scales
        .iter()
        .map(|s| domain_log_odds(s, &lexicon, &stoplist))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(at(Stage::DomainRank))?;
    let shortlist = config.log_odds_shortlist.unwrap_or(domain_scales.len());
    let log_odds_ranking = rank_scales(&domain_scales.scales, &scores, shortlist).map_err(at(Stage::DomainRank))?;
    let domain_track = rank_by_citations(&log_odds_ranking, config.top_n_domain).map_err(at(Stage::CitationRank))?;

    let (construct_scales, construct_scores): (Vec<_>, Vec<_>) = domain_scales
        .scales
        .iter()
        .zip(&scores)
        .filter(|(s, _)| s.construct == config.construct)
        .map(|(s, score)| (s.clone(), *score))
        .unzip();
    let construct_track = if construct_scales.is_empty() {
        log::warn!(
            "no {} {} scales; construct track is empty",
            config.domain,
            config.construct
        );
        Vec::new()
    } else {
        let ranked = rank_scales(&construct_scales, &construct_scores, construct_scales.len())
            .map_err(at(Stage::ConstructRank))?;
        rank_by_citations(&ranked, config.top_n_construct).map_err(at(Stage::ConstructRank))?
    };

    let database = build_prompt_database(&domain_track, &construct_track, corpus, &[]).map_err(at(Stage::Union))?;
    let report = RankingReport {
        domain: config.domain,
        construct: config.construct,
        scores: domain_scales
            .scales
            .iter()
            .zip(&scores)
            .map(|(s, &log_odds)| ScaleScore {
                scale_id: s.scale_id.clone(),
                construct: s.construct,
                citations: s.citations,
                log_odds,
            })
            .collect(),
        log_odds_ranking,
        domain_track,
        construct_track,
    };
    Ok(Selection { report, database })
}

pub fn preprocess(database: &PromptDatabase, config: &PipelineConfig) -> Result<PreprocessedCorpus, PipelineError> {
    preprocess_corpus(database, &stoplist(config)?).map_err(at(Stage::Preprocess))
}

/// Vectors keyed by stem. Pretrained tables are looked up by stem first
/// and then by the stem's most frequent surface form.
pub fn embed(pre: &PreprocessedCorpus, config: &PipelineConfig) -> Result<EmbeddingTable, PipelineError> {
    match &config.embedding {
        EmbeddingMode::Train => {
            let matrix = build_cooccurrence(&pre.streams, config.window, config.weighting).map_err(at(Stage::Embed))?;
            let trained = train_glove(&matrix, &config.glove).map_err(at(Stage::Embed))?;
            Ok(trained.table)
        }
        EmbeddingMode::Pretrained(path) => {
            let source = load_vectors(path).map_err(at(Stage::Embed))?;
            let mut table = EmbeddingTable::new(source.dim());
            for stem in pre.bag.counts().keys() {
                let vector = source.get(stem).or_else(|| source.get(pre.display_form(stem)));
                if let Some(v) = vector {
                    table.insert(stem, v.to_vec()).map_err(at(Stage::Embed))?;
                }
            }
            Ok(table)
        }
    }
}

/// Stems to cluster: frequent enough and present in the table, sorted.
pub fn cluster_vocabulary(pre: &PreprocessedCorpus, table: &EmbeddingTable, min_count: u64) -> Vec<String> {
    pre.bag
        .counts()
        .iter()
        .filter(|(stem, n)| **n >= min_count && table.get(stem).is_some_and(|v| v.iter().any(|x| *x != 0.0)))
        .map(|(stem, _)| stem.clone())
        .collect()
}

pub fn cluster(
    words: Vec<String>,
    table: &EmbeddingTable,
    config: &PipelineConfig,
) -> Result<(Dendrogram, FlatClustering), PipelineError> {
    if words.len() < 2 {
        return Err(PipelineError::new(
            Stage::Cluster,
            VocabularyError::TooFewWords(words.len()),
        ));
    }
    let dist = distance_matrix(table, &words, config.metric).map_err(at(Stage::Cluster))?;
    let n = words.len();
    let dendrogram = agglomerate(&dist, config.linkage, words).map_err(at(Stage::Cluster))?;
    let cut = match config.cut {
        Cut::Clusters(k) if k > n => {
            log::warn!("k = {k} exceeds {n} words; using {n}");
            Cut::Clusters(n)
        }
        cut => cut,
    };
    let flat = cut_tree(&dendrogram, cut).map_err(at(Stage::Cluster))?;
    Ok((dendrogram, flat))
}

pub fn concept_lexicon(config: &PipelineConfig) -> Result<ConceptLexicon, PipelineError> {
    match &config.concepts {
        Some(p) => ConceptLexicon::load(p).map_err(at(Stage::Config)),
        None => Ok(ConceptLexicon::bundled()),
    }
}

pub fn summarize(
    flat: &FlatClustering,
    table: &EmbeddingTable,
    pre: &PreprocessedCorpus,
    config: &PipelineConfig,
) -> Result<Vec<ClusterSummary>, PipelineError> {
    let weights: BTreeMap<String, f64> = pre.bag.counts().iter().map(|(w, n)| (w.clone(), *n as f64)).collect();
    summarize_cut(
        flat,
        table,
        &concept_lexicon(config)?,
        Some(&weights),
        DEFAULT_RANKED_TERMS,
    )
    .map_err(at(Stage::Summarize))
}

pub fn valence_lexicon(config: &PipelineConfig) -> Result<ValenceLexicon, PipelineError> {
    match &config.valence_dir {
        Some(dir) => ValenceLexicon::load_dir(dir).map_err(at(Stage::Config)),
        None => Ok(ValenceLexicon::bundled()),
    }
}

pub fn template_bank(config: &PipelineConfig) -> Result<TemplateBank, PipelineError> {
    match &config.templates {
        Some(p) => TemplateBank::load(p).map_err(at(Stage::Config)),
        None => Ok(TemplateBank::bundled()),
    }
}

pub fn formulate(
    summaries: &[ClusterSummary],
    database: &PromptDatabase,
    pre: &PreprocessedCorpus,
    config: &PipelineConfig,
) -> Result<PromptSet, PipelineError> {
    let bank = template_bank(config)?;
    let concepts = concept_lexicon(config)?;
    let lexicon = valence_lexicon(config)?;
    build_prompt_set(
        summaries,
        &PromptSources {
            bank: &bank,
            concepts: &concepts,
            surfaces: &pre.surfaces,
            items: &database.items,
            lexicon: &lexicon,
            descriptive_per_side: config.descriptive_per_side,
        },
    )
    .map_err(at(Stage::Formulate))
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub selection: Selection,
    pub preprocessed: PreprocessedCorpus,
    pub table: EmbeddingTable,
    pub dendrogram: Dendrogram,
    pub clustering: FlatClustering,
    pub summaries: Vec<ClusterSummary>,
    pub prompt_set: PromptSet,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let corpus = load_input_corpus(config)?;
    let selection = select_scales(&corpus, config)?;
    let preprocessed = preprocess(&selection.database, config)?;
    let table = embed(&preprocessed, config)?;
    let words = cluster_vocabulary(&preprocessed, &table, config.min_count);
    let (dendrogram, clustering) = cluster(words, &table, config)?;
    let summaries = summarize(&clustering, &table, &preprocessed, config)?;
    let prompt_set = formulate(&summaries, &selection.database, &preprocessed, config)?;
    Ok(PipelineOutput {
        selection,
        preprocessed,
        table,
        dendrogram,
        clustering,
        summaries,
        prompt_set,
    })
}

pub const RANKING_REPORT: &str = "ranking.json";
pub const DATABASE_FILE: &str = "database.json";
pub const VECTORS_FILE: &str = "vectors.txt";
pub const DENDROGRAM_FILE: &str = "dendrogram.tsv";
pub const CLUSTERS_FILE: &str = "clusters.tsv";
pub const SUMMARY_REPORT: &str = "summary.json";
pub const PROMPT_SET_FILE: &str = "prompt_set.json";

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes every report into `dir` and returns the paths written.
pub fn write_outputs(output: &PipelineOutput, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::new(Stage::Write, format!("{}: {e}", dir.display())))?;
    let mut vectors = Vec::new();
    output.table.write_to(&mut vectors).map_err(at(Stage::Write))?;
    let mut dendrogram = Vec::new();
    output
        .dendrogram
        .write_table(&mut dendrogram)
        .map_err(at(Stage::Write))?;
    let mut clusters = Vec::new();
    output
        .clustering
        .write_assignments(&mut clusters)
        .map_err(at(Stage::Write))?;
    Ok(vec![
        write_file(dir, RANKING_REPORT, to_pretty_json(&output.selection.report).as_bytes())?,
        write_file(
            dir,
            DATABASE_FILE,
            to_pretty_json(&output.selection.database).as_bytes(),
        )?,
        write_file(dir, VECTORS_FILE, &vectors)?,
        write_file(dir, DENDROGRAM_FILE, &dendrogram)?,
        write_file(dir, CLUSTERS_FILE, &clusters)?,
        write_file(dir, SUMMARY_REPORT, to_pretty_json(&output.summaries).as_bytes())?,
        write_file(dir, PROMPT_SET_FILE, output.prompt_set.to_json().as_bytes())?,
    ])
}
