use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use trustconv_core::corpus::{filter_scales, save_corpus, validate_corpus};
use trustconv_core::dialog::DialogSession;
use trustconv_core::pipeline::{self, PipelineError, Stage};
use trustconv_core::prompt_gen::PromptSet;
use trustconv_core::service::{ServiceError, SessionStore, DEFAULT_PROMPT_SET_ID};
use trustconv_core::valence::ValenceLexicon;

use crate::args::{ChatArgs, Command, IngestArgs, PromptSource, ServeArgs, StageArgs};
use crate::{chat, exit, server};

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Stage(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => exit::CONFIG_ERROR,
            Failure::Stage(_) => exit::STAGE_ERROR,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Stage(m) => f.write_str(m),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Stage(e.to_string())
        }
    }
}

impl From<ServiceError> for Failure {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::PromptSetChanged(_) | ServiceError::InvalidPromptSetId(_) => Failure::Config(e.to_string()),
            _ => Failure::Stage(e.to_string()),
        }
    }
}

fn write_error(path: &Path, e: impl fmt::Display) -> Failure {
    PipelineError::new(Stage::Write, format!("{}: {e}", path.display())).into()
}

pub fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest(a) => ingest(&a),
        Command::Rank(a) => rank(&a),
        Command::Embed(a) => embed(&a),
        Command::Cluster(a) => cluster(&a),
        Command::Summarize(a) => summarize(&a),
        Command::Prompts(a) => prompts(&a),
        Command::Pipeline(a) => run_all(&a),
        Command::Chat(a) => chat_command(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn ingest(args: &IngestArgs) -> Result<(), Failure> {
    let config = pipeline::PipelineConfig {
        corpus: args.corpus.clone(),
        ..Default::default()
    };
    config.validate()?;
    let corpus = pipeline::load_input_corpus(&config)?;
    let violations = validate_corpus(&corpus);
    for v in &violations {
        eprintln!("{}: {} violates `{}`", v.scale_id, v.field, v.rule);
    }
    if !violations.is_empty() {
        return Err(PipelineError::new(Stage::Ingest, format!("{} validation errors", violations.len())).into());
    }
    let filtered = filter_scales(&corpus, args.domain, args.construct);
    println!("{} scales, {} items", filtered.len(), filtered.item_count());
    if let Some(out) = &args.out {
        save_corpus(&filtered, out).map_err(|e| write_error(out, e))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn prepare(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))
}

fn save(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| write_error(&path, e))?;
    println!("wrote {}", path.display());
    Ok(path)
}

/// The stages every command past `ingest` shares.
struct Upstream {
    config: pipeline::PipelineConfig,
    selection: pipeline::Selection,
}

fn rank_stage(args: &StageArgs) -> Result<Upstream, Failure> {
    let config = args.pipeline.to_config();
    config.validate()?;
    let corpus = pipeline::load_input_corpus(&config)?;
    let selection = pipeline::select_scales(&corpus, &config)?;
    prepare(&args.out)?;
    save(
        &args.out,
        pipeline::RANKING_REPORT,
        pipeline::to_pretty_json(&selection.report).as_bytes(),
    )?;
    save(
        &args.out,
        pipeline::DATABASE_FILE,
        pipeline::to_pretty_json(&selection.database).as_bytes(),
    )?;
    Ok(Upstream { config, selection })
}

fn rank(args: &StageArgs) -> Result<(), Failure> {
    let up = rank_stage(args)?;
    for r in up
        .selection
        .report
        .domain_track
        .iter()
        .chain(&up.selection.report.construct_track)
    {
        println!(
            "{:>3}  {:<24} {:>8.3} {:>6}",
            r.rank, r.scale_id, r.log_odds_score, r.citations
        );
    }
    Ok(())
}

struct Embedded {
    up: Upstream,
    pre: trustconv_core::textprep::PreprocessedCorpus,
    table: trustconv_core::embedding::EmbeddingTable,
}

fn embed_stage(args: &StageArgs) -> Result<Embedded, Failure> {
    let up = rank_stage(args)?;
    let pre = pipeline::preprocess(&up.selection.database, &up.config)?;
    let table = pipeline::embed(&pre, &up.config)?;
    let mut vectors = Vec::new();
    table.write_to(&mut vectors).map_err(|e| write_error(&args.out, e))?;
    save(&args.out, pipeline::VECTORS_FILE, &vectors)?;
    Ok(Embedded { up, pre, table })
}

fn embed(args: &StageArgs) -> Result<(), Failure> {
    let e = embed_stage(args)?;
    println!("{} vectors of dimension {}", e.table.len(), e.table.dim());
    Ok(())
}

fn cluster_stage(args: &StageArgs) -> Result<(Embedded, trustconv_core::clustering::FlatClustering), Failure> {
    let e = embed_stage(args)?;
    let words = pipeline::cluster_vocabulary(&e.pre, &e.table, e.up.config.min_count);
    let (dendrogram, flat) = pipeline::cluster(words, &e.table, &e.up.config)?;
    let mut dgm = Vec::new();
    dendrogram
        .write_table(&mut dgm)
        .map_err(|err| write_error(&args.out, err))?;
    let mut assignments = Vec::new();
    flat.write_assignments(&mut assignments)
        .map_err(|err| write_error(&args.out, err))?;
    save(&args.out, pipeline::DENDROGRAM_FILE, &dgm)?;
    save(&args.out, pipeline::CLUSTERS_FILE, &assignments)?;
    Ok((e, flat))
}

fn cluster(args: &StageArgs) -> Result<(), Failure> {
    let (_, flat) = cluster_stage(args)?;
    for (i, members) in flat.clusters().iter().enumerate() {
        println!("{i}: {}", members.join(" "));
    }
    Ok(())
}

fn summarize_stage(
    args: &StageArgs,
) -> Result<(Embedded, Vec<trustconv_core::summarization::ClusterSummary>), Failure> {
    let (e, flat) = cluster_stage(args)?;
    let summaries = pipeline::summarize(&flat, &e.table, &e.pre, &e.up.config)?;
    save(
        &args.out,
        pipeline::SUMMARY_REPORT,
        pipeline::to_pretty_json(&summaries).as_bytes(),
    )?;
    Ok((e, summaries))
}

fn summarize(args: &StageArgs) -> Result<(), Failure> {
    let (_, summaries) = summarize_stage(args)?;
    for s in &summaries {
        println!("{}: {} <- {}", s.cluster_id, s.selected_term, s.members.join(" "));
    }
    Ok(())
}

fn prompts(args: &StageArgs) -> Result<(), Failure> {
    let (e, summaries) = summarize_stage(args)?;
    let set = pipeline::formulate(&summaries, &e.up.selection.database, &e.pre, &e.up.config)?;
    save(&args.out, pipeline::PROMPT_SET_FILE, set.to_json().as_bytes())?;
    print_prompts(&set);
    Ok(())
}

fn run_all(args: &StageArgs) -> Result<(), Failure> {
    let output = pipeline::run_pipeline(&args.pipeline.to_config())?;
    for path in pipeline::write_outputs(&output, &args.out)? {
        println!("wrote {}", path.display());
    }
    print_prompts(&output.prompt_set);
    Ok(())
}

fn print_prompts(set: &PromptSet) {
    for p in set.all() {
        println!("[{}] {}", p.level.as_str(), p.text);
    }
    for r in &set.rejected {
        println!("rejected [{}] {}: {}", r.level.as_str(), r.text, r.reason);
    }
}

/// Loads the prompt set named on the command line or builds one in-process.
pub fn resolve_prompt_set(source: &PromptSource) -> Result<(PromptSet, ValenceLexicon), Failure> {
    let config = source.pipeline.to_config();
    config.validate()?;
    let lexicon = pipeline::valence_lexicon(&config)?;
    let set = match &source.prompt_set {
        Some(path) => PromptSet::load(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?,
        None => {
            log::info!("building prompt set");
            pipeline::run_pipeline(&config)?.prompt_set
        }
    };
    set.check_invariants().map_err(Failure::Config)?;
    Ok((set, lexicon))
}

fn chat_command(args: &ChatArgs) -> Result<(), Failure> {
    let (set, lexicon) = resolve_prompt_set(&args.source)?;
    let mut session = DialogSession::new(
        "terminal",
        Arc::new(set),
        Arc::new(lexicon),
        args.source.max_turns,
        trustconv_core::dialog::now_millis(),
    )
    .map_err(|e| Failure::Config(e.to_string()))?;
    let stdin = io::stdin();
    let stdout = io::stdout();
    chat::run(&mut session, stdin.lock(), stdout.lock()).map_err(|e| Failure::Stage(format!("terminal: {e}")))?;
    let indicators = trustconv_core::dialog::extract_indicators(&session);
    let mut out = io::stdout();
    let _ = writeln!(out, "{}", pipeline::to_pretty_json(&indicators).trim_end());
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<(), Failure> {
    let (set, lexicon) = resolve_prompt_set(&args.source)?;
    let store = SessionStore::open(
        &args.data_dir,
        BTreeMap::from([(DEFAULT_PROMPT_SET_ID.to_string(), set)]),
        lexicon,
        args.source.max_turns,
    )?;
    log::info!(
        "restored {} sessions from {}",
        store.session_ids().len(),
        args.data_dir.display()
    );
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Stage(e.to_string()))?;
    runtime
        .block_on(server::serve(Arc::new(store), SocketAddr::new(args.host, args.port)))
        .map_err(|e| Failure::Stage(format!("server: {e}")))
}
