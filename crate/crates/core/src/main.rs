use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::info;

use xdomain::ann::IndexParams;
use xdomain::clustering::{cluster_cache, DescriptorConfig, GlobalClusterSet, KMeansConfig};
use xdomain::corpus::{ingest, Corpus};
use xdomain::embedding::{provider_from_spec, EmbeddingKind, VectorCache};
use xdomain::eval::{build_eval_corpus, load_keywords, run_eval, EvalConfig, Representation};
use xdomain::search::{faceted_search, keyword_filter, Query, SearchConfig};
use xdomain::service::{router, AppState, FeedbackLog, ServiceConfig, FEEDBACK_LOG_ENV};
use xdomain::snapshot::{build_indices, index_file, load_caches, BuildConfig, Snapshot};
use xdomain::synth::{domain_corpus, planted_corpus, write_jsonl, DomainCorpusConfig, PlantedConfig};

#[derive(Parser)]
#[command(name = "xdomain", version, about = "Faceted cross-domain search over scientific abstracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus ingestion.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Embed documents or sentences into a vector cache.
    Embed(EmbedArgs),
    /// K-means over a vector cache.
    Cluster(ClusterArgs),
    /// Per-cluster sentence indices.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Full build: ingest, embed, cluster, index.
    #[command(subcommand)]
    Snapshot(SnapshotCmd),
    /// Cluster purity evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// One faceted search against a snapshot, printed as JSON.
    Search(SearchArgs),
    /// Generate a synthetic corpus.
    #[command(subcommand)]
    Synth(SynthCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_docs: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Doc,
    Sent,
}

impl From<KindArg> for EmbeddingKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Doc => EmbeddingKind::Document,
            KindArg::Sent => EmbeddingKind::Sentence,
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// `fallback` or `http:<url>`.
    #[arg(long, default_value = "fallback")]
    provider: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, default_value_t = 256)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Corpus used to compute cluster descriptors.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct IndexArgs {
    #[arg(long, default_value_t = IndexParams::default().max_degree)]
    max_degree: usize,
    #[arg(long, default_value_t = IndexParams::default().ef_construction)]
    ef_construction: usize,
    #[arg(long, default_value_t = IndexParams::default().ef_search)]
    ef_search: usize,
    #[arg(long, default_value_t = IndexParams::default().exact_threshold)]
    exact_threshold: usize,
}

impl IndexArgs {
    fn params(&self) -> IndexParams {
        IndexParams {
            max_degree: self.max_degree,
            ef_construction: self.ef_construction,
            ef_search: self.ef_search,
            exact_threshold: self.exact_threshold,
            ..IndexParams::default()
        }
    }
}

#[derive(Subcommand)]
enum IndexCmd {
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        sent_cache: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        index: IndexArgs,
    },
}

#[derive(Subcommand)]
enum SnapshotCmd {
    Build {
        /// Raw records or a persisted corpus.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        max_docs: Option<usize>,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "fallback")]
        doc_provider: String,
        #[arg(long, default_value = "fallback")]
        sent_provider: String,
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[command(flatten)]
        index: IndexArgs,
    },
}

#[derive(Subcommand)]
enum EvalCmd {
    Purity {
        #[arg(long)]
        corpus: PathBuf,
        /// `builtin18` or a file with one keyword per line.
        #[arg(long, default_value = "builtin18")]
        keywords: String,
        #[arg(long, default_value_t = 18)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        /// Also run with the keywords removed from titles and abstracts.
        #[arg(long)]
        strip_keywords: bool,
        #[arg(long, value_delimiter = ',', default_value = "random,tfidf,doc")]
        reps: Vec<String>,
        #[arg(long, default_value = "fallback")]
        provider: String,
        #[arg(long, default_value_t = 256)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    snapshot_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Sentence provider for queries: `fallback` or `http:<url>`.
    #[arg(long, default_value = "fallback")]
    provider: String,
    #[arg(long, env = FEEDBACK_LOG_ENV)]
    feedback_log: Option<PathBuf>,
    #[arg(long)]
    cors_origin: Option<String>,
    #[arg(long, default_value_t = 3600)]
    query_ttl_secs: u64,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    snapshot_dir: PathBuf,
    #[arg(long = "abstract")]
    abstract_text: String,
    #[arg(long, default_value_t = 0)]
    sentence_index: usize,
    #[arg(long, default_value_t = 10)]
    t: usize,
    #[arg(long, default_value = "fallback")]
    provider: String,
    #[arg(long)]
    keyword: Option<String>,
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Topical corpus with one pseudo-word vocabulary per domain.
    Domains {
        #[arg(long, default_value_t = 2000)]
        docs: usize,
        #[arg(long, default_value_t = 20)]
        domains: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Labeled corpus whose only class signal is the class keyword.
    Planted {
        #[arg(long, default_value = "builtin18")]
        keywords: String,
        #[arg(long, default_value_t = 200)]
        docs_per_class: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Corpus(CorpusCmd::Ingest { input, out, max_docs }) => corpus_ingest(&input, &out, max_docs),
        Command::Embed(a) => embed(a),
        Command::Cluster(a) => cluster(a),
        Command::Index(IndexCmd::Build {
            corpus,
            sent_cache,
            clusters,
            out_dir,
            index,
        }) => index_build(&corpus, &sent_cache, &clusters, &out_dir, index.params()),
        Command::Snapshot(SnapshotCmd::Build {
            input,
            out_dir,
            max_docs,
            k,
            seed,
            doc_provider,
            sent_provider,
            dim,
            index,
        }) => {
            let corpus = load_corpus(&input, max_docs)?;
            let cfg = BuildConfig {
                k,
                seed,
                index: index.params(),
                ..BuildConfig::default()
            };
            let dp = provider_from_spec(&doc_provider, EmbeddingKind::Document, dim)?;
            let sp = provider_from_spec(&sent_provider, EmbeddingKind::Sentence, dim)?;
            let previous = load_caches(&out_dir);
            let built = Snapshot::build(
                corpus,
                dp.as_ref(),
                sp.as_ref(),
                &cfg,
                previous.as_ref().map(|(d, s)| (d, s)),
            )?;
            built.save(&out_dir)?;
            let m = &built.snapshot.manifest;
            info!(
                documents = m.corpus.documents,
                sentences = m.corpus.sentences,
                clusters = m.cluster_sizes.len(),
                dir = %out_dir.display(),
                "snapshot written"
            );
            Ok(())
        }
        Command::Eval(EvalCmd::Purity {
            corpus,
            keywords,
            k,
            runs,
            strip_keywords,
            reps,
            provider,
            dim,
            seed,
            out,
        }) => {
            let corpus = load_corpus(&corpus, None)?;
            let keywords = load_keywords(&keywords)?;
            let labeled = build_eval_corpus(&corpus, &keywords)?;
            let representations = reps
                .iter()
                .map(|r| r.parse::<Representation>())
                .collect::<Result<Vec<_>, _>>()?;
            let provider = if representations.contains(&Representation::Doc) {
                Some(provider_from_spec(&provider, EmbeddingKind::Document, dim)?)
            } else {
                None
            };
            let cfg = EvalConfig {
                keywords,
                k,
                runs,
                representations,
                remove_keywords: strip_keywords,
                base_seed: seed,
                ..EvalConfig::default()
            };
            let report = run_eval(&cfg, &labeled, provider.as_deref())?;
            print!("{}", report.to_table());
            if let Some(out) = out {
                fs::write(&out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
            }
            Ok(())
        }
        Command::Serve(a) => serve(a),
        Command::Search(a) => search(a),
        Command::Synth(cmd) => synth(cmd),
    }
}

fn load_corpus(path: &Path, max_docs: Option<usize>) -> Result<Corpus> {
    let ingested = ingest(path, max_docs)?;
    for s in ingested.skipped.iter().take(20) {
        tracing::warn!(line = s.line, reason = %s.reason, "skipped record");
    }
    if !ingested.skipped.is_empty() {
        tracing::warn!(count = ingested.skipped.len(), "records skipped");
    }
    Ok(ingested.corpus)
}

fn corpus_ingest(input: &Path, out: &Path, max_docs: Option<usize>) -> Result<()> {
    let corpus = load_corpus(input, max_docs)?;
    corpus.save(out)?;
    let stats = corpus.stats();
    info!(documents = stats.documents, sentences = stats.sentences, out = %out.display(), "corpus written");
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, None)?;
    let kind = EmbeddingKind::from(a.kind);
    let provider = provider_from_spec(&a.provider, kind, a.dim)?;
    let items: Vec<(String, String)> = match kind {
        EmbeddingKind::Document => corpus
            .documents()
            .iter()
            .map(|d| (d.paper_id.clone(), d.encoder_text()))
            .collect(),
        EmbeddingKind::Sentence => corpus
            .sentences()
            .map(|s| (s.reference().key(), s.text.clone()))
            .collect(),
    };
    let previous = VectorCache::load(&a.out).ok();
    let cache = VectorCache::build(&items, provider.as_ref(), previous.as_ref(), a.batch_size)?;
    cache.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    info!(vectors = cache.len(), dim = cache.dimension(), out = %a.out.display(), "cache written");
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let cache = VectorCache::load(&a.vectors)?;
    let mut set = cluster_cache(&cache, &KMeansConfig::new(a.k, a.seed))?;
    if let Some(path) = &a.corpus {
        set.attach_descriptors(&load_corpus(path, None)?, &DescriptorConfig::default())?;
    }
    set.save(&a.out)?;
    info!(k = set.k(), inertia = set.model.inertia, out = %a.out.display(), "cluster model written");
    Ok(())
}

fn index_build(corpus: &Path, sent_cache: &Path, clusters: &Path, out_dir: &Path, params: IndexParams) -> Result<()> {
    let corpus = load_corpus(corpus, None)?;
    let cache = VectorCache::load(sent_cache)?;
    let clusters = GlobalClusterSet::load(clusters)?;
    let indices = build_indices(&corpus, &clusters, &cache, params)?;
    fs::create_dir_all(out_dir)?;
    for index in &indices {
        index.save(out_dir.join(index_file(index.cluster_id())))?;
    }
    info!(indices = indices.len(), out = %out_dir.display(), "indices written");
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let snapshot = Snapshot::load(&a.snapshot_dir)?;
    let dim = snapshot.manifest.sentence_provider.dimension;
    let provider = provider_from_spec(&a.provider, EmbeddingKind::Sentence, dim)?;
    let feedback = match &a.feedback_log {
        Some(p) => FeedbackLog::open(p)?,
        None => {
            tracing::warn!("no feedback log configured; feedback is kept in memory only");
            FeedbackLog::in_memory()
        }
    };
    let config = ServiceConfig {
        query_ttl: Duration::from_secs(a.query_ttl_secs),
        cors_origin: a.cors_origin.clone(),
        ..ServiceConfig::default()
    };
    let state = Arc::new(AppState::new(snapshot, provider, feedback, config)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad host/port")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        info!(%addr, "serving");
        tokio::spawn(reload_on_hangup(state.clone(), a.snapshot_dir.clone()));
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// SIGHUP reloads the snapshot directory and swaps it in.
#[cfg(unix)]
async fn reload_on_hangup(state: Arc<AppState>, dir: PathBuf) {
    use tokio::signal::unix::{signal, SignalKind};
    let Ok(mut hup) = signal(SignalKind::hangup()) else {
        return;
    };
    while hup.recv().await.is_some() {
        let dir = dir.clone();
        let loaded = tokio::task::spawn_blocking(move || Snapshot::load(dir)).await;
        match loaded {
            Ok(Ok(s)) => match state.replace_snapshot(s) {
                Ok(()) => info!("snapshot reloaded"),
                Err(e) => tracing::error!(error = %e, "reloaded snapshot rejected"),
            },
            Ok(Err(e)) => tracing::error!(error = %e, "snapshot reload failed"),
            Err(e) => tracing::error!(error = %e, "snapshot reload task failed"),
        }
    }
}

#[cfg(not(unix))]
async fn reload_on_hangup(_: Arc<AppState>, _: PathBuf) {}

fn search(a: SearchArgs) -> Result<()> {
    let snapshot = Snapshot::load(&a.snapshot_dir)?;
    let dim = snapshot.manifest.sentence_provider.dimension;
    let provider = provider_from_spec(&a.provider, EmbeddingKind::Sentence, dim)?;
    snapshot.check_query_provider(provider.as_ref())?;
    let query = Query::new(&a.abstract_text, a.sentence_index, None, provider.as_ref())?;
    let cfg = SearchConfig {
        t: a.t,
        ..SearchConfig::default()
    };
    let mut groups = faceted_search(&snapshot, &query, &cfg)?;
    if let Some(kw) = &a.keyword {
        groups = keyword_filter(&groups, kw)?;
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &groups)?;
    writeln!(out)?;
    Ok(())
}

fn synth(cmd: SynthCmd) -> Result<()> {
    let (records, out) = match cmd {
        SynthCmd::Domains { docs, domains, seed, out } => {
            if domains == 0 {
                bail!("--domains must be at least 1");
            }
            let cfg = DomainCorpusConfig {
                docs,
                domains,
                seed,
                ..DomainCorpusConfig::default()
            };
            (domain_corpus(&cfg), out)
        }
        SynthCmd::Planted {
            keywords,
            docs_per_class,
            seed,
            out,
        } => {
            let kws = load_keywords(&keywords)?;
            let refs: Vec<&str> = kws.iter().map(String::as_str).collect();
            (planted_corpus(&PlantedConfig::new(&refs, docs_per_class, seed)), out)
        }
    };
    let mut w = BufWriter::new(File::create(&out).with_context(|| format!("creating {}", out.display()))?);
    write_jsonl(&records, &mut w)?;
    w.flush()?;
    info!(records = records.len(), out = %out.display(), "synthetic corpus written");
    Ok(())
}
