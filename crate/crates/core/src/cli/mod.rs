//! The `dmkg` command line.
//!
//! Exit codes: 0 success, 2 input error, 3 backend error, 4 internal
//! invariant violation. For `run`, options resolve as flag, then `--config`
//! file, then built-in default.

mod config;

use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::ConfigFile;

use crate::eval::{evaluate, load_dataset, render_table, DatasetStats, MultihopInstance};
use crate::fixtures;
use crate::gateway::{Backend, Gateway, HttpBackend, HttpConfig, MockBackend, MockScript, Templates};
use crate::graph::{EditQuadruple, GraphConfig, KnowledgeGraph};
use crate::normalize::Normalizer;
use crate::pipeline::{read_traces, solve_all, write_traces, ImageUsed, TraceStatus};
use crate::reasoner::{FallbackOrder, ReasonerConfig, DEFAULT_ALPHA, DEFAULT_K};
use crate::retrieval::{EntityIndex, RetrievalError, DEFAULT_DIMS, DEFAULT_IN_FLIGHT};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.to_string(),
        }
    }

    fn backend(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: message.to_string(),
        }
    }

    fn internal(message: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INTERNAL,
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "dmkg", version, about = "Multihop QA over an editable multimodal knowledge graph")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a graph, apply edits, and write a snapshot.
    Build(BuildArgs),
    /// Solve every dataset instance and write traces.
    Run(RunArgs),
    /// Score traces against a dataset.
    Eval(EvalArgs),
    /// Write a built-in fixture to a directory.
    Fixture(FixtureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Entities file (JSONL).
    #[arg(long)]
    pub entities: PathBuf,
    /// Triples file (JSONL).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Edits file (JSONL), applied in order after loading.
    #[arg(long)]
    pub edits: Option<PathBuf>,
    /// Case-sensitive alias matching.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageMode {
    Original,
    Rephrased,
    Both,
}

impl ImageMode {
    pub fn modes(self) -> Vec<ImageUsed> {
        match self {
            ImageMode::Original => vec![ImageUsed::Original],
            ImageMode::Rephrased => vec![ImageUsed::Rephrased],
            ImageMode::Both => vec![ImageUsed::Original, ImageUsed::Rephrased],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Base URL of the model service.
    #[arg(long, env = "DMKG_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Seed for the mock backend (required with it).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding width.
    #[arg(long)]
    pub dims: Option<usize>,
    /// Per-request timeout for the HTTP backend.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Directory image handles are resolved against (HTTP backend).
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Directory with prompt template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// JSON file of scripted mock replies.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Output directory for the snapshot.
    #[arg(long)]
    pub out: PathBuf,
    /// Also embed every imaged entity and write `embeddings.bin`.
    #[arg(long)]
    pub embed_cache: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Relation-linking threshold.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Snippets per answer call.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub image_mode: Option<ImageMode>,
    #[arg(long)]
    pub no_linking: bool,
    #[arg(long)]
    pub no_rag: bool,
    #[arg(long)]
    pub no_decision: bool,
    /// Candidate preferred when the decision step is off.
    #[arg(long, value_enum)]
    pub fallback: Option<Fallback>,
    /// Let superseded facts into every answer path (audit).
    #[arg(long)]
    pub include_superseded: bool,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory; traces go to `traces.jsonl`.
    #[arg(long)]
    pub out: PathBuf,
    /// key = value defaults for the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Embedding cache written by `build --embed-cache`.
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fallback {
    Link,
    Model,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub traces: PathBuf,
    /// Directory for `report.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FixtureKind {
    /// The single worked example.
    Person,
    /// The worked example plus 10 generated instances per hop count.
    Acceptance,
    /// A dataset with the benchmark's hop distribution (no graph).
    Benchmark,
    /// A graph at the benchmark's knowledge-graph size (no dataset).
    Scale,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    #[arg(long, value_enum, default_value = "acceptance")]
    pub kind: FixtureKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(a) => cmd_build(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Fixture(a) => cmd_fixture(&a),
    }
}

fn normalizer(strict: bool) -> Normalizer {
    Normalizer::new(strict)
}

fn load_graph(args: &GraphArgs) -> Result<KnowledgeGraph, CliError> {
    let config = GraphConfig {
        normalizer: normalizer(args.strict),
        ..GraphConfig::default()
    };
    let mut graph = KnowledgeGraph::load_files(&args.entities, args.graph.as_deref(), config).map_err(CliError::input)?;
    if let Some(path) = &args.edits {
        let file = std::fs::File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let edits = EditQuadruple::read_jsonl(BufReader::new(file)).map_err(CliError::input)?;
        for (i, e) in edits.iter().enumerate() {
            graph
                .apply_edit(e)
                .map_err(|err| CliError::input(format!("edits line {}: {err}", i + 1)))?;
        }
    }
    Ok(graph)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<std::fs::File>, CliError> {
    std::fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Backend options after applying the config file.
struct BackendChoice {
    kind: BackendKind,
    endpoint: Option<String>,
    seed: Option<u64>,
    dims: usize,
    timeout_ms: Option<u64>,
    image_root: Option<PathBuf>,
    templates: Option<PathBuf>,
    mock_script: Option<PathBuf>,
}

impl BackendChoice {
    fn resolve(args: &BackendArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let kind = match args.backend {
            Some(k) => k,
            None => match cfg.get::<String>("backend").map_err(CliError::input)? {
                Some(s) => BackendKind::from_str(&s, true).map_err(|_| CliError::input(format!("unknown backend {s}")))?,
                None => BackendKind::Mock,
            },
        };
        let get = |key: &str| cfg.get::<String>(key).map_err(CliError::input);
        Ok(Self {
            kind,
            endpoint: args.endpoint.clone().or(get("endpoint")?),
            seed: args.seed.or(cfg.get("seed").map_err(CliError::input)?),
            dims: args.dims.or(cfg.get("dims").map_err(CliError::input)?).unwrap_or(DEFAULT_DIMS),
            timeout_ms: args.timeout_ms.or(cfg.get("timeout-ms").map_err(CliError::input)?),
            image_root: args.image_root.clone().or(get("image-root")?.map(PathBuf::from)),
            templates: args.templates.clone().or(get("templates")?.map(PathBuf::from)),
            mock_script: args.mock_script.clone().or(get("mock-script")?.map(PathBuf::from)),
        })
    }

    fn gateway(&self, graph: &KnowledgeGraph, instances: &[MultihopInstance]) -> Result<Gateway, CliError> {
        let templates = match &self.templates {
            Some(dir) => Templates::load_dir(dir).map_err(CliError::input)?,
            None => Templates::defaults(),
        };
        let backend: Arc<dyn Backend> = match self.kind {
            BackendKind::Mock => {
                let seed = self
                    .seed
                    .ok_or_else(|| CliError::input("the mock backend requires --seed"))?;
                let script = match &self.mock_script {
                    Some(p) => {
                        let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                        serde_json::from_str::<MockScript>(&text)
                            .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?
                    }
                    None => MockScript::default(),
                };
                let cfg = fixtures::oracle_mock(graph, instances, seed)
                    .with_dims(self.dims)
                    .with_script(script);
                Arc::new(MockBackend::new(cfg))
            }
            BackendKind::Http => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| CliError::input("the http backend requires --endpoint or DMKG_ENDPOINT"))?;
                let mut cfg = HttpConfig::new(endpoint);
                if let Some(t) = self.timeout_ms {
                    cfg.timeout_ms = t;
                }
                cfg.image_root = self.image_root.clone();
                Arc::new(HttpBackend::new(cfg))
            }
        };
        Ok(Gateway::new(backend, templates, self.dims))
    }
}

fn index_error(e: RetrievalError) -> CliError {
    match e {
        RetrievalError::Embedder { .. } | RetrievalError::Gateway(_) => CliError::backend(e),
        other => CliError::input(other),
    }
}

fn cmd_build(args: &BuildArgs) -> Result<(), CliError> {
    let graph = load_graph(&args.graph)?;
    create_dir(&args.out)?;
    let mut ents = create_file(&args.out.join("entities.jsonl"))?;
    let mut trips = create_file(&args.out.join("triples.jsonl"))?;
    let io = |e: std::io::Error| CliError::input(format!("writing snapshot: {e}"));
    graph.write_entities(&mut ents).map_err(io)?;
    graph.write_triples(&mut trips).map_err(io)?;
    ents.flush().map_err(io)?;
    trips.flush().map_err(io)?;
    if args.embed_cache {
        let choice = BackendChoice::resolve(&args.backend, &ConfigFile::default())?;
        let gateway = choice.gateway(&graph, &[])?;
        let index = EntityIndex::build(&graph, &gateway, DEFAULT_IN_FLIGHT).map_err(index_error)?;
        let mut out = create_file(&args.out.join("embeddings.bin"))?;
        index.write_cache(&mut out).map_err(CliError::input)?;
        out.flush().map_err(io)?;
    }
    let s = graph.stats();
    println!(
        "entities={} imaged={} triples={} active={} edited={} superseded={}",
        s.entities, s.imaged_entities, s.triples, s.active_triples, s.edited_triples, s.superseded_triples
    );
    Ok(())
}

/// Reasoner settings and run options after applying the config file.
pub struct RunSettings {
    pub reasoner: ReasonerConfig,
    pub image_mode: ImageMode,
    pub workers: usize,
}

pub fn resolve_run_settings(args: &RunArgs, cfg: &ConfigFile) -> Result<RunSettings, CliError> {
    let fallback = match args.fallback {
        Some(f) => f,
        None => match cfg.get::<String>("fallback").map_err(CliError::input)? {
            Some(s) => Fallback::from_str(&s, true).map_err(|_| CliError::input(format!("unknown fallback {s}")))?,
            None => Fallback::Link,
        },
    };
    let image_mode = match args.image_mode {
        Some(m) => m,
        None => match cfg.get::<String>("image-mode").map_err(CliError::input)? {
            Some(s) => ImageMode::from_str(&s, true).map_err(|_| CliError::input(format!("unknown image mode {s}")))?,
            None => ImageMode::Original,
        },
    };
    let k = args.k.or(cfg.get("k").map_err(CliError::input)?).unwrap_or(DEFAULT_K);
    let reasoner = ReasonerConfig {
        alpha: args.alpha.or(cfg.get("alpha").map_err(CliError::input)?).unwrap_or(DEFAULT_ALPHA),
        k,
        context_limit: k,
        enable_linking: !(args.no_linking || cfg.flag("no-linking").map_err(CliError::input)?),
        enable_rag: !(args.no_rag || cfg.flag("no-rag").map_err(CliError::input)?),
        enable_decision: !(args.no_decision || cfg.flag("no-decision").map_err(CliError::input)?),
        fallback: match fallback {
            Fallback::Link => FallbackOrder::PreferLink,
            Fallback::Model => FallbackOrder::PreferModel,
        },
        include_superseded: args.include_superseded || cfg.flag("include-superseded").map_err(CliError::input)?,
    };
    reasoner.validate().map_err(CliError::input)?;
    Ok(RunSettings {
        reasoner,
        image_mode,
        workers: args.workers.or(cfg.get("workers").map_err(CliError::input)?).unwrap_or(0),
    })
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(p) => ConfigFile::load(p).map_err(CliError::input)?,
        None => ConfigFile::default(),
    };
    let settings = resolve_run_settings(args, &cfg)?;
    let choice = BackendChoice::resolve(&args.backend, &cfg)?;
    let graph = load_graph(&args.graph)?;
    let instances = load_dataset(&args.dataset, graph.normalizer()).map_err(CliError::input)?;
    let gateway = choice.gateway(&graph, &instances)?;
    let index = match &args.embed_cache {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
            EntityIndex::read_cache(BufReader::new(f), &graph).map_err(CliError::input)?
        }
        None => EntityIndex::build(&graph, &gateway, DEFAULT_IN_FLIGHT).map_err(index_error)?,
    };
    if index.dims() != gateway.dims() {
        return Err(CliError::input(format!(
            "embedding cache has {} dims, backend {}",
            index.dims(),
            gateway.dims()
        )));
    }
    let modes = settings.image_mode.modes();
    let traces = solve_all(&instances, &graph, &settings.reasoner, &gateway, &index, &modes, settings.workers);
    if traces.len() != instances.len() * modes.len() {
        return Err(CliError::internal("trace count differs from instances x image modes"));
    }

    create_dir(&args.out)?;
    let mut out = create_file(&args.out.join("traces.jsonl"))?;
    write_traces(&traces, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::input(format!("writing traces: {e}")))?;

    let count = |p: fn(&TraceStatus) -> bool| traces.iter().filter(|t| p(&t.status)).count();
    eprintln!(
        "traces={} completed={} unresolved={} error={}",
        traces.len(),
        count(|s| *s == TraceStatus::Completed),
        count(|s| matches!(s, TraceStatus::Unresolved(_))),
        count(|s| *s == TraceStatus::Error),
    );
    if let Some(t) = traces.iter().find(|t| t.backend_unreachable) {
        return Err(CliError::backend(format!(
            "backend unreachable while solving {}: {}",
            t.instance,
            t.error.as_deref().unwrap_or("see trace flags")
        )));
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let norm = normalizer(args.strict);
    let instances = load_dataset(&args.dataset, norm).map_err(CliError::input)?;
    let file = std::fs::File::open(&args.traces).map_err(|e| CliError::input(format!("{}: {e}", args.traces.display())))?;
    let traces = read_traces(BufReader::new(file))
        .map_err(|(line, msg)| CliError::input(format!("traces line {line}: {msg}")))?;
    let reports = evaluate(&traces, &instances, norm).map_err(CliError::input)?;
    for r in &reports {
        if r.h_acc.correct > r.m_acc.correct {
            return Err(CliError::internal(format!("H-Acc exceeds M-Acc for {}", r.image_mode.as_str())));
        }
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
    }
    print!("{}", render_table(&reports));
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let mut out = create_file(&dir.join("report.json"))?;
        serde_json::to_writer_pretty(&mut out, &reports)
            .map_err(std::io::Error::from)
            .and_then(|_| out.write_all(b"\n"))
            .and_then(|_| out.flush())
            .map_err(|e| CliError::input(format!("writing report: {e}")))?;
    }
    Ok(())
}

fn cmd_fixture(args: &FixtureArgs) -> Result<(), CliError> {
    create_dir(&args.out)?;
    let io = |e: std::io::Error| CliError::input(format!("writing fixture: {e}"));
    match args.kind {
        FixtureKind::Person | FixtureKind::Acceptance => {
            let f = if args.kind == FixtureKind::Person {
                fixtures::person_example()
            } else {
                fixtures::acceptance_fixture(args.seed)
            };
            f.write_dir(&args.out).map_err(io)?;
            let stats = DatasetStats::compute(&f.instances, Normalizer::DEFAULT);
            println!(
                "instances={} entities={} triples={} edits={}",
                stats.instances,
                f.entities.len(),
                f.triples.len(),
                f.edits().len()
            );
        }
        FixtureKind::Benchmark => {
            let d = fixtures::benchmark_dataset(args.seed);
            let out = create_file(&args.out.join("dataset.jsonl"))?;
            crate::eval::write_dataset(&d, out).map_err(io)?;
            let stats = DatasetStats::compute(&d, Normalizer::DEFAULT);
            println!(
                "instances={} by_hops={:?} distinct_edits={}",
                stats.instances, stats.by_hops, stats.distinct_edits
            );
        }
        FixtureKind::Scale => {
            let spec = fixtures::ScaleSpec::BENCHMARK;
            fixtures::write_scale_graph(&args.out, spec, args.seed).map_err(io)?;
            println!("entities={} imaged={} triples={}", spec.entities, spec.imaged, spec.triples);
        }
    }
    Ok(())
}
