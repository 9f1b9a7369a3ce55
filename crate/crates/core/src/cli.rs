//! Command-line entry point. Exit codes: 0 success, 1 usage, 2 data error.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::bench_tart;
use crate::error::{Error, Result};
use crate::index_store::{build_index, save_index};
use crate::kb::{build_knowledge_base, KnowledgeBase};
use crate::retrieval::{rank, Cascade, Mode, Query, Snapshot};
use crate::service::{serve, AppState, MatchBody, ProviderSpec, QueryResponse, ServiceConfig};
use crate::simcore::Weights;
use crate::synthetic::SyntheticCorpus;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "forumqa", version, about = "Find previously answered forum questions similar to a new one")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean a questions export (plus optional threads) into a KB snapshot.
    Ingest {
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        threads: Option<PathBuf>,
        /// Where to write the JSON snapshot.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed every KB entry and save the embedding cache.
    Index {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the KB against one new question.
    Query {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value = "")]
        content: String,
        /// Comma-separated tags.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
        #[arg(long)]
        tag_filter: bool,
        /// Print the HTTP API's JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        listen: Option<String>,
    },
    /// Measure query turn-around time on the cached index.
    Bench {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        /// Benchmark a generated KB of this many entries instead of a real one.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 100)]
        queries: usize,
        #[arg(long, default_value_t = 1)]
        repetitions: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug, Args, Clone, Default)]
struct SourceArgs {
    /// key=value config file (defaults to $QA_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    /// KB snapshot written by `ingest`.
    #[arg(long)]
    kb: Option<PathBuf>,
    #[arg(long)]
    questions: Option<PathBuf>,
    #[arg(long)]
    threads: Option<PathBuf>,
    /// Embedding cache written by `index`.
    #[arg(long)]
    index: Option<PathBuf>,
    /// hash | precomputed | remote | word
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    remote_url: Option<String>,
    #[arg(long)]
    word_vectors: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
struct TuningArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    /// jaccard | cosine_title | cosine_content | weighted
    #[arg(long)]
    mode: Option<Mode>,
    /// Jaccard prefilter size; enables the two-stage cascade.
    #[arg(long)]
    cascade: Option<usize>,
    #[arg(short = 'p', long = "p")]
    p: Option<f64>,
    #[arg(short = 'q', long = "q")]
    q: Option<f64>,
    #[arg(short = 'r', long = "r")]
    r: Option<f64>,
}

impl SourceArgs {
    fn config(&self) -> Result<ServiceConfig> {
        let mut cfg = match &self.config {
            Some(p) => ServiceConfig::load(p)?,
            None => ServiceConfig::from_env()?.unwrap_or_default(),
        };
        if let Some(kb) = &self.kb {
            cfg.kb = Some(kb.clone());
        }
        if let Some(q) = &self.questions {
            cfg.questions = Some(q.clone());
            cfg.threads = self.threads.clone();
            if self.kb.is_none() {
                cfg.kb = None;
            }
        }
        if let Some(i) = &self.index {
            cfg.index = Some(i.clone());
        }
        let kind = self.provider.as_deref();
        cfg.provider = match (kind, &cfg.provider) {
            (None | Some("hash"), ProviderSpec::Hash { dim }) => ProviderSpec::Hash { dim: self.dim.unwrap_or(*dim) },
            (Some("hash"), _) => ProviderSpec::Hash {
                dim: self.dim.unwrap_or(crate::embeddings::DEFAULT_HASH_DIM),
            },
            (Some("precomputed"), _) => ProviderSpec::Precomputed,
            (Some("remote"), prev) => ProviderSpec::Remote {
                url: match (&self.remote_url, prev) {
                    (Some(u), _) => u.clone(),
                    (None, ProviderSpec::Remote { url }) => url.clone(),
                    _ => return Err(Error::Config("--provider remote needs --remote-url".into())),
                },
            },
            (Some("word"), prev) => ProviderSpec::WordVectors {
                path: match (&self.word_vectors, prev) {
                    (Some(p), _) => p.clone(),
                    (None, ProviderSpec::WordVectors { path }) => path.clone(),
                    _ => return Err(Error::Config("--provider word needs --word-vectors".into())),
                },
            },
            (Some(other), _) => return Err(Error::Config(format!("unknown provider {other:?}"))),
            (None, prev) => prev.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TuningArgs {
    fn apply(&self, cfg: &mut ServiceConfig) -> Result<()> {
        let w = cfg.weights;
        cfg.weights = Weights {
            p: self.p.unwrap_or(w.p),
            q: self.q.unwrap_or(w.q),
            r: self.r.unwrap_or(w.r),
        };
        cfg.k = self.k.unwrap_or(cfg.k);
        cfg.threshold = self.threshold.unwrap_or(cfg.threshold);
        cfg.mode = self.mode.unwrap_or(cfg.mode);
        if let Some(m) = self.cascade {
            cfg.cascade = true;
            cfg.cascade_m = m;
        }
        cfg.validate()
    }
}

fn query_from(cfg: &ServiceConfig, title: String, content: String) -> Query {
    let mut q = Query::new(title, content).k(cfg.k).threshold(cfg.threshold).mode(cfg.mode);
    if cfg.cascade {
        q.cascade = Some(Cascade {
            prefilter_size: cfg.cascade_m,
        });
    }
    q
}

fn print_table(out: &mut impl Write, matches: &[MatchBody]) -> std::io::Result<()> {
    if matches.is_empty() {
        return writeln!(out, "no similar question above threshold; this looks like a new question");
    }
    writeln!(
        out,
        "{:>4}  {:>6}  {:>6}  {:>6}  {:>6}  {:>7}  {:<12} {:<6} title",
        "rank", "n_sim", "t_sim", "h_sim", "c_sim", "jaccard", "query_id", "thread"
    )?;
    for m in matches {
        let s = &m.scores;
        writeln!(
            out,
            "{:>4}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>7}  {:<12} {:<6} {}",
            m.rank,
            s.n_sim,
            s.t_sim,
            s.h_sim,
            s.c_sim,
            s.jaccard.map_or("-".into(), |j| format!("{j:.3}")),
            m.query_id,
            if m.thread_available { "yes" } else { "no" },
            m.title
        )?;
    }
    Ok(())
}

fn run_command(command: Command, out: &mut impl Write) -> Result<()> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match command {
        Command::Ingest { questions, threads, out: dest } => {
            let kb = build_knowledge_base(&questions, threads.as_deref())?;
            kb.save_json(&dest)?;
            let s = kb.stats();
            writeln!(
                out,
                "raw {} cleaned {} dropped {} threads {} -> {}",
                s.raw_count,
                s.cleaned_count,
                s.dropped_count,
                kb.threads().count(),
                dest.display()
            )
            .map_err(io)?;
            for d in kb.diagnostics() {
                tracing::info!("{d}");
            }
        }
        Command::Index { source, out: dest } => {
            let cfg = source.config()?;
            let kb = cfg.load_kb()?;
            let provider = cfg.make_provider(&kb, None)?;
            let index = build_index(&kb, provider.as_ref())?;
            save_index(&index, &dest)?;
            writeln!(
                out,
                "indexed {} entries with {} (dim {}) -> {}",
                index.len(),
                index.provider_id(),
                index.dim(),
                dest.display()
            )
            .map_err(io)?;
        }
        Command::Query {
            source,
            tuning,
            title,
            content,
            tags,
            tag_filter,
            json,
        } => {
            let mut cfg = source.config()?;
            tuning.apply(&mut cfg)?;
            let start = std::time::Instant::now();
            let (provider, snapshot) = cfg.open(false)?;
            let load_ms = start.elapsed().as_secs_f64() * 1000.0;
            let mut q = query_from(&cfg, title, content);
            q.tags = tags.into_iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()).collect();
            q.tag_filter = tag_filter;
            let start = std::time::Instant::now();
            let matches = rank(&snapshot, provider.as_ref(), &q, &cfg.weights)?;
            let body = QueryResponse {
                matches: matches.iter().map(MatchBody::from).collect(),
                elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
            };
            if json {
                serde_json::to_writer_pretty(&mut *out, &body).map_err(|e| Error::Protocol(e.to_string()))?;
                writeln!(out).map_err(io)?;
            } else {
                print_table(out, &body.matches).map_err(io)?;
                writeln!(out, "({:.2} ms query, {:.0} ms load)", body.elapsed_ms, load_ms).map_err(io)?;
            }
        }
        Command::Serve { source, listen } => {
            let mut cfg = source.config()?;
            if let Some(l) = listen {
                cfg.listen = l;
            }
            let state = match cfg.open(false) {
                Ok((provider, snapshot)) => AppState::ready(cfg, provider, snapshot),
                Err(e) => {
                    tracing::warn!(error = %e, "starting without an index; POST /api/admin/reload once it exists");
                    AppState::new(cfg)
                }
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            rt.block_on(serve(Arc::new(state)))?;
        }
        Command::Bench {
            source,
            tuning,
            synthetic,
            queries,
            repetitions,
            seed,
        } => {
            let mut cfg = source.config()?;
            tuning.apply(&mut cfg)?;
            let mut gen = SyntheticCorpus::new(seed, 2_000);
            let (provider, snapshot) = match synthetic {
                Some(n) => {
                    let kb = gen.knowledge_base(n);
                    let provider = cfg.make_provider(&kb, None)?;
                    let index = build_index(&kb, provider.as_ref())?;
                    (provider, Snapshot::new(Arc::new(kb), Arc::new(index))?)
                }
                None => cfg.open(false)?,
            };
            let qs = bench_queries(&mut gen, snapshot.kb(), queries, seed)
                .into_iter()
                .map(|(t, c)| query_from(&cfg, t, c))
                .collect::<Vec<_>>();
            let report = bench_tart(&snapshot, provider.as_ref(), &qs, repetitions, &cfg.weights)?;
            writeln!(out, "{} entries, provider {}", snapshot.len(), snapshot.index().provider_id()).map_err(io)?;
            writeln!(out, "{report}").map_err(io)?;
        }
    }
    Ok(())
}

/// Half paraphrases of archived questions, half unrelated new questions.
pub fn bench_queries(gen: &mut SyntheticCorpus, kb: &KnowledgeBase, n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let entries: Vec<_> = kb.entries().collect();
    (0..n)
        .map(|i| match entries.choose(&mut rng) {
            Some(e) if i % 2 == 0 => gen.paraphrase(e, 0.2),
            _ => gen.fresh_question(),
        })
        .collect()
}

/// Parse `args` and run. Diagnostics go to stderr, results to `out`.
pub fn run_with<I, T>(args: I, out: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("forumqa: {e}");
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            }
        }
    }
}

pub fn cli_main() -> i32 {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "forumqa=warn".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
    run_with(std::env::args_os(), &mut std::io::stdout().lock())
}
