mod cache;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use topicfield::topic_model::{corpus_violations, read_parts};
use topicfield::{
    final_frame, render_svg, run_to_convergence, synth_corpus, synth_model, Bounds, Corpus, DocumentId, FieldState,
    FrameRecord, LayoutParams, SortKey, TopicModel,
};
use topicfield_service::{AppConfig, AppState};

#[derive(Parser)]
#[command(name = "topicfield", version, about = "Explore a document collection through its topic model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check corpus and model invariants; one line per violation
    Validate(DataArgs),
    /// Keyword search; prints id, score, title, year as TSV
    Query(QueryArgs),
    /// Place the top-k magnets on the ring, converge, and export
    Layout(LayoutArgs),
    /// Write a synthetic model directory and matching corpus
    Synth(SynthArgs),
    /// Start the HTTP service
    Serve(ServeArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Reuse or write a serialized index here
    #[arg(long)]
    index_cache: Option<PathBuf>,
    #[arg(short = 'q', long = "query")]
    query: String,
    #[arg(long, default_value = "relevance")]
    sort: SortKey,
    #[arg(long, default_value_t = 20)]
    limit: usize,
}

#[derive(Args)]
struct LayoutArgs {
    #[command(flatten)]
    data: DataArgs,
    /// File with one document id per line
    #[arg(long, conflicts_with = "query", required_unless_present = "query")]
    docs: Option<PathBuf>,
    /// Use the top search hits instead of a document list
    #[arg(long)]
    query: Option<String>,
    #[arg(long, default_value_t = 50, requires = "query")]
    limit: usize,
    #[arg(long, default_value_t = topicfield::field::FieldSettings::default().k)]
    k: usize,
    /// Write every simulation frame as a JSON array
    #[arg(long)]
    steps_out: Option<PathBuf>,
    /// `.svg` or `.json`
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    docs: usize,
    #[arg(long)]
    topics: usize,
    #[arg(long)]
    vocab: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "TOPICFIELD_CORPUS")]
    corpus: PathBuf,
    #[arg(long, env = "TOPICFIELD_MODEL")]
    model: PathBuf,
    #[arg(long, env = "TOPICFIELD_BIND", default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// JSON object of default layout parameters; missing keys keep their defaults
    #[arg(long)]
    layout_params: Option<PathBuf>,
}

/// Bad invocation that clap cannot detect; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

enum ExportFormat {
    Svg,
    Json,
}

fn export_format(path: &Path) -> Option<ExportFormat> {
    match path.extension()?.to_str()? {
        "svg" => Some(ExportFormat::Svg),
        "json" => Some(ExportFormat::Json),
        _ => None,
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load_path(path).with_context(|| format!("cannot load corpus {}", path.display()))
}

fn load_model(path: &Path, corpus: &Corpus) -> Result<TopicModel> {
    TopicModel::load(path, corpus).with_context(|| format!("cannot load model {}", path.display()))
}

fn validate(args: DataArgs) -> Result<bool> {
    let corpus = load_corpus(&args.corpus)?;
    let parts = read_parts(&args.model).with_context(|| format!("cannot read model {}", args.model.display()))?;
    let mut violations = parts.violations();
    violations.extend(corpus_violations(&parts.document_ids, &corpus));
    let mut out = io::stdout().lock();
    for v in &violations {
        writeln!(out, "{v}")?;
    }
    if violations.is_empty() {
        eprintln!(
            "ok: {} documents, {} topics, {} terms",
            corpus.len(),
            parts.beta.nrows(),
            parts.vocabulary.len()
        );
    } else {
        eprintln!("{} violation(s)", violations.len());
    }
    Ok(violations.is_empty())
}

fn clean(text: &str) -> String {
    text.split(['\t', '\n', '\r']).collect::<Vec<_>>().join(" ")
}

fn query(args: QueryArgs) -> Result<()> {
    let (corpus, index) = cache::load_with_index(&args.corpus, args.index_cache.as_deref())?;
    let mut out = BufWriter::new(io::stdout().lock());
    for hit in index.search(&args.query, args.sort, args.limit) {
        let doc = corpus.get(&hit.doc)?;
        let year = doc.year.map(|y| y.to_string()).unwrap_or_default();
        writeln!(out, "{}\t{}\t{}\t{}", hit.doc, hit.score, clean(&doc.title), year)?;
    }
    out.flush()?;
    Ok(())
}

fn read_id_list(path: &Path) -> Result<Vec<DocumentId>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(DocumentId::from)
        .collect())
}

fn layout(args: LayoutArgs) -> Result<()> {
    let format = export_format(&args.out).ok_or_else(|| UsageError("--out must end in .svg or .json".into()))?;
    let corpus = load_corpus(&args.data.corpus)?;
    let model = load_model(&args.data.model, &corpus)?;
    let ids = match (&args.docs, &args.query) {
        (Some(path), _) => read_id_list(path)?,
        (None, Some(q)) => topicfield::Index::build(&corpus)
            .search(q, SortKey::Relevance, args.limit)
            .into_iter()
            .map(|h| h.doc)
            .collect(),
        (None, None) => unreachable!("clap requires one of --docs and --query"),
    };
    if ids.is_empty() {
        bail!("no documents to lay out");
    }
    let mut field = FieldState::new(Bounds::default());
    field.set_topic_settings(&model, true, args.k)?;
    field.add_documents(&corpus, &model, &ids)?;
    let params = LayoutParams::default();

    let frame = match &args.steps_out {
        Some(path) => {
            let frames = run_to_convergence(&field, &model, &params)?;
            let records: Vec<FrameRecord> = frames.iter().map(|f| FrameRecord::new(f, &field)).collect();
            fs::write(path, serde_json::to_vec(&records)?).with_context(|| format!("cannot write {}", path.display()))?;
            records.into_iter().last().expect("at least one step")
        }
        None => final_frame(&field, &model, &params)?,
    };
    let last_step = frame.step;
    let text = match format {
        ExportFormat::Svg => render_svg(&frame, &field, &model),
        ExportFormat::Json => serde_json::to_string_pretty(&frame)?,
    };
    fs::write(&args.out, text).with_context(|| format!("cannot write {}", args.out.display()))?;
    eprintln!(
        "{} documents, {} magnets, {} steps",
        field.doc_nodes().len(),
        field.topic_nodes().len(),
        last_step
    );
    Ok(())
}

fn synth(args: SynthArgs) -> Result<()> {
    let model = synth_model(args.seed, args.docs, args.topics, args.vocab)?;
    let corpus = synth_corpus(&model, args.seed);
    model.write_dir(&args.out)?;
    let path = args.out.join("corpus.jsonl");
    let file = fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut out = BufWriter::new(file);
    corpus.write_jsonl(&mut out)?;
    out.flush()?;
    eprintln!("wrote {} and {}", args.out.join("model.json").display(), path.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let corpus = load_corpus(&args.corpus)?;
    let model = load_model(&args.model, &corpus)?;
    let mut config = AppConfig::new(corpus, model);
    if let Some(path) = &args.layout_params {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        config.layout = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
        config.layout.validate()?;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(topicfield_service::serve(AppState::new(config), args.bind))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(args) => validate(args).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::from(1) }),
        Command::Query(args) => query(args).map(|_| ExitCode::SUCCESS),
        Command::Layout(args) => layout(args).map(|_| ExitCode::SUCCESS),
        Command::Synth(args) => synth(args).map(|_| ExitCode::SUCCESS),
        Command::Serve(args) => serve(args).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<UsageError>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
