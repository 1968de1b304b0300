use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trustconv_core::clustering::{Cut, Linkage, Metric};
use trustconv_core::corpus::{Construct, Domain};
use trustconv_core::dialog::DEFAULT_MAX_TURNS;
use trustconv_core::embedding::{GloveConfig, Weighting};
use trustconv_core::pipeline::{EmbeddingMode, PipelineConfig};
use trustconv_core::prompt_gen::DEFAULT_DESCRIPTIVE_PER_SIDE;
use trustconv_core::service::DATA_DIR_ENV;

#[derive(Debug, Parser)]
#[command(
    name = "trustconv",
    version,
    about = "Build nondirective trust prompts and run conversational surveys"
)]
pub struct Cli {
    /// Log filter, e.g. `info` or `trustconv_core=debug`.
    #[arg(long, global = true, default_value = "warn", env = "RUST_LOG")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a scale corpus.
    Ingest(IngestArgs),
    /// Rank scales and write ranking.json and database.json.
    Rank(StageArgs),
    /// Train (or load) word vectors and write vectors.txt.
    Embed(StageArgs),
    /// Cluster the vocabulary and write dendrogram.tsv and clusters.tsv.
    Cluster(StageArgs),
    /// Summarize clusters and write summary.json.
    Summarize(StageArgs),
    /// Formulate prompts and write prompt_set.json.
    Prompts(StageArgs),
    /// Run every stage and write all outputs.
    Pipeline(StageArgs),
    /// Hold a conversation in the terminal.
    Chat(ChatArgs),
    /// Serve the survey over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Corpus JSON file; the bundled corpus when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Keep only scales of this domain.
    #[arg(long)]
    pub domain: Option<Domain>,
    /// Keep only scales of this construct.
    #[arg(long)]
    pub construct: Option<Construct>,
    /// Write the (filtered) corpus here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value = "automation")]
    pub domain: Domain,
    #[arg(long, default_value = "situational")]
    pub construct: Construct,
    #[arg(long, default_value_t = 9)]
    pub top_n_domain: usize,
    #[arg(long, default_value_t = 3)]
    pub top_n_construct: usize,
    /// Keep only this many scales after log-odds ranking, before the citation re-rank.
    #[arg(long)]
    pub log_odds_shortlist: Option<usize>,
    #[arg(long)]
    pub domain_lexicon: Option<PathBuf>,
    #[arg(long)]
    pub stoplist: Option<PathBuf>,

    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value = "inverse-distance")]
    pub weighting: Weighting,
    #[arg(long, default_value_t = 100.0)]
    pub xmax: f64,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Parallel training shards; anything above 1 gives up bit-reproducibility.
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
    /// Use these word vectors instead of training.
    #[arg(long)]
    pub pretrained: Option<PathBuf>,

    #[arg(long, default_value_t = 2)]
    pub min_count: u64,
    #[arg(long, default_value = "cosine")]
    pub metric: Metric,
    #[arg(long, default_value = "average")]
    pub linkage: Linkage,
    /// Number of flat clusters.
    #[arg(long, conflicts_with = "height")]
    pub k: Option<usize>,
    /// Cut the dendrogram at this height instead of into k clusters.
    #[arg(long)]
    pub height: Option<f64>,

    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub concepts: Option<PathBuf>,
    /// Directory with positive.txt, negative.txt and negation.txt.
    #[arg(long)]
    pub valence_dir: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DESCRIPTIVE_PER_SIDE)]
    pub descriptive_per_side: usize,
}

impl Default for PipelineArgs {
    fn default() -> Self {
        #[derive(Parser)]
        struct Wrapper {
            #[command(flatten)]
            args: PipelineArgs,
        }
        Wrapper::parse_from(["trustconv"]).args
    }
}

impl PipelineArgs {
    pub fn to_config(&self) -> PipelineConfig {
        let cut = match (self.k, self.height) {
            (_, Some(h)) => Cut::Height(h),
            (Some(k), None) => Cut::Clusters(k),
            (None, None) => PipelineConfig::default().cut,
        };
        PipelineConfig {
            corpus: self.corpus.clone(),
            domain: self.domain,
            construct: self.construct,
            top_n_domain: self.top_n_domain,
            top_n_construct: self.top_n_construct,
            log_odds_shortlist: self.log_odds_shortlist,
            domain_lexicon: self.domain_lexicon.clone(),
            stoplist: self.stoplist.clone(),
            window: self.window,
            weighting: self.weighting,
            glove: GloveConfig {
                dim: self.dim,
                x_max: self.xmax,
                alpha: self.alpha,
                learning_rate: self.lr,
                epochs: self.epochs,
                seed: self.seed,
                shards: self.shards,
            },
            embedding: match &self.pretrained {
                Some(p) => EmbeddingMode::Pretrained(p.clone()),
                None => EmbeddingMode::Train,
            },
            min_count: self.min_count,
            metric: self.metric,
            linkage: self.linkage,
            cut,
            templates: self.templates.clone(),
            concepts: self.concepts.clone(),
            valence_dir: self.valence_dir.clone(),
            descriptive_per_side: self.descriptive_per_side,
        }
    }
}

/// Where a conversation's prompts come from.
#[derive(Debug, Clone, Args)]
pub struct PromptSource {
    /// A prompt_set.json written by `prompts` or `pipeline`. When omitted the
    /// pipeline runs in-process with the flags below.
    #[arg(long)]
    pub prompt_set: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long, default_value_t = DEFAULT_MAX_TURNS)]
    pub max_turns: usize,
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub source: PromptSource,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: PromptSource,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Persistence root for sessions and pinned prompt sets.
    #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
    pub data_dir: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn default_flags_match_default_config() {
        assert_eq!(PipelineArgs::default().to_config(), PipelineConfig::default());
    }

    #[test]
    fn height_and_k_map_to_cuts() {
        let cli = Cli::parse_from(["trustconv", "cluster", "--height", "0.5"]);
        let Command::Cluster(a) = cli.command else { panic!() };
        assert_eq!(a.pipeline.to_config().cut, Cut::Height(0.5));
        let cli = Cli::parse_from([
            "trustconv",
            "cluster",
            "--k",
            "4",
            "--linkage",
            "ward",
            "--metric",
            "euclidean",
        ]);
        let Command::Cluster(a) = cli.command else { panic!() };
        let c = a.pipeline.to_config();
        assert_eq!(
            (c.cut, c.linkage, c.metric),
            (Cut::Clusters(4), Linkage::Ward, Metric::Euclidean)
        );
        assert!(Cli::try_parse_from(["trustconv", "cluster", "--k", "4", "--height", "1"]).is_err());
    }
}
