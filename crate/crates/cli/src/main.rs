use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use claimprobe_core::domain::Claim;
use claimprobe_core::gateway::{Backend, ReplayBackend};
use claimprobe_core::harness::correlation::{align_series, correlation_report, load_report_scores};
use claimprobe_core::harness::dataset::dataset_id;
use claimprobe_core::harness::evaluate::{collect_tallies, evaluate_tallies, grid_search, parse_grid, DevSplit};
use claimprobe_core::harness::verify::verify_claim;
use claimprobe_core::harness::{load_claims, load_dataset, Ablation, Config, Pipeline, RunContext};
use claimprobe_core::retrieval::{load_corpus, VectorStore};

#[derive(Parser)]
#[command(name = "claimprobe", version, about = "Verify scientific claims by interrogating a language model about retrieved abstracts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a corpus and add it to a vector store.
    Ingest {
        /// JSONL corpus file or directory of .txt abstracts.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Selects the embedder; the built-in hashing embedder is used without it.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Retrieve abstracts for a claim and verify it against each.
    Verify {
        #[arg(long)]
        claim: String,
        #[arg(long, default_value = "claim")]
        claim_id: String,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        config: PathBuf,
        /// Overrides retrieval.top_n.
        #[arg(long)]
        top_n: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score the pipeline on a labelled dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "all")]
        ablation: Ablation,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Search alpha over cached tallies.
    Gridsearch {
        #[command(flatten)]
        data: DataArgs,
        /// `start:end:step` or a comma-separated list.
        #[arg(long, default_value = "0.0:1.0:0.1")]
        grid: String,
        /// Choose alpha on this fraction of documents and report the rest.
        #[arg(long)]
        dev_split: Option<f64>,
        #[arg(long, default_value_t = 0)]
        dev_seed: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pearson correlations between per-document confidences of reports.
    Correlate {
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    claims: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Answer from a recorded transcript instead of the configured backend.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    run_id: Option<String>,
    /// Overrides run.transcript_path.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

fn run_context(run_id: Option<String>) -> RunContext {
    let now = chrono::Utc::now();
    let run_id = run_id.unwrap_or_else(|| format!("run-{}", now.format("%Y%m%dT%H%M%SZ")));
    RunContext::new(run_id, now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn load_config(path: &Path, run: &RunArgs) -> Result<Config> {
    let mut config = Config::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if run.seed.is_some() {
        config.run.seed = run.seed;
    }
    if run.transcript.is_some() {
        config.run.transcript_path = run.transcript.clone();
    }
    Ok(config)
}

fn build_pipeline(config: &Config, replay: Option<&Path>, run: &RunArgs) -> Result<Pipeline> {
    let backend: Arc<dyn Backend> = match replay {
        Some(path) => Arc::new(ReplayBackend::load(path).with_context(|| format!("loading transcript {}", path.display()))?),
        None => config.backend()?,
    };
    let mut pipeline = Pipeline::from_config(config, backend, run_context(run.run_id.clone()))?;
    if replay.is_some() && run.transcript.is_none() {
        pipeline = pipeline.with_transcript(None);
    }
    Ok(pipeline)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(out, &text)
}

fn ingest(corpus: &Path, store_path: &Path, config: Option<&Path>) -> Result<()> {
    let config = match config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let embedder = config.embedder()?;
    let mut store = if store_path.exists() {
        VectorStore::load(store_path)?
    } else {
        VectorStore::new(embedder.id())
    };
    let documents = load_corpus(corpus).with_context(|| format!("loading corpus {}", corpus.display()))?;
    let added = store.ingest(embedder.as_ref(), documents)?;
    store.save(store_path)?;
    eprintln!("ingested {added} documents; store holds {}", store.len());
    Ok(())
}

fn verify(claim: Claim, store: Option<PathBuf>, config: &Path, top_n: Option<usize>, run: &RunArgs) -> Result<()> {
    let config = load_config(config, run)?;
    let store_path = store
        .or_else(|| config.retrieval.store_path.clone())
        .context("no vector store given (use --store or retrieval.store_path)")?;
    let store = VectorStore::load(&store_path).with_context(|| format!("loading store {}", store_path.display()))?;
    let embedder = config.embedder()?;
    let pipeline = build_pipeline(&config, None, run)?;
    let report = verify_claim(&pipeline, &claim, &store, embedder.as_ref(), top_n.unwrap_or(config.retrieval.top_n))?;
    for d in &report.documents {
        eprintln!(
            "{:>3}. {:<24} sim {:.3}  meta {} ({:.3})",
            d.rank, d.result.doc_id, d.similarity, d.result.meta.verdict, d.result.meta.confidence
        );
    }
    write_json(run.out.as_deref(), &report)
}

fn evaluate_cmd(data: &DataArgs, ablation: Ablation, run: &RunArgs) -> Result<()> {
    let config = load_config(&data.config, run)?;
    let records = load_dataset(&data.dataset)?;
    let claims = load_claims(&data.claims)?;
    let pipeline = build_pipeline(&config, data.replay.as_deref(), run)?;
    let tallies = collect_tallies(&pipeline, &records, &claims, ablation)?;
    let report = evaluate_tallies(&dataset_id(&data.dataset), &tallies, pipeline.params(), ablation, pipeline.metadata());
    let m = &report.metrics;
    for (name, metrics) in [("RAG", &m.rag), ("WP", &m.wp), ("WIG", &m.wig), ("WBU", &m.wbu), ("META", &m.meta)] {
        eprintln!("{name:<5} accuracy {:.4}  macro-F1 {:.4}", metrics.accuracy, metrics.macro_f1);
    }
    write_json(run.out.as_deref(), &report)
}

fn gridsearch(data: &DataArgs, grid: &str, dev_split: Option<f64>, dev_seed: u64, run: &RunArgs) -> Result<()> {
    let grid = parse_grid(grid)?;
    let config = load_config(&data.config, run)?;
    let records = load_dataset(&data.dataset)?;
    let claims = load_claims(&data.claims)?;
    let pipeline = build_pipeline(&config, data.replay.as_deref(), run)?;
    let tallies = collect_tallies(&pipeline, &records, &claims, Ablation::All)?;
    let split = dev_split.map(|fraction| DevSplit { fraction, seed: dev_seed });
    let report = grid_search(&dataset_id(&data.dataset), &tallies, &grid, split, pipeline.metadata())?;
    for best in &report.best {
        eprintln!(
            "{:<5} best alpha {:.2}  accuracy {:.4}  macro-F1 {:.4}",
            best.method.name(),
            best.alpha,
            best.accuracy,
            best.macro_f1
        );
    }
    write_json(run.out.as_deref(), &report)
}

fn correlate(results: &[PathBuf], out: Option<&Path>) -> Result<()> {
    let mut named = Vec::new();
    for path in results {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        named.extend(load_report_scores(path, &label)?);
    }
    let series = align_series(named);
    let matrix = correlation_report(&series)?;
    if !matrix.degenerate.is_empty() {
        eprintln!("constant series (correlations left blank): {}", matrix.degenerate.join(", "));
    }
    write_output(out, &matrix.to_csv())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { corpus, store, config } => ingest(&corpus, &store, config.as_deref()),
        Command::Verify {
            claim,
            claim_id,
            store,
            config,
            top_n,
            run,
        } => {
            if top_n == Some(0) {
                bail!("--top-n must be at least 1");
            }
            verify(Claim::new(claim_id, claim)?, store, &config, top_n, &run)
        }
        Command::Evaluate { data, ablation, run } => evaluate_cmd(&data, ablation, &run),
        Command::Gridsearch {
            data,
            grid,
            dev_split,
            dev_seed,
            run,
        } => gridsearch(&data, &grid, dev_split, dev_seed, &run),
        Command::Correlate { results, out } => correlate(&results, out.as_deref()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
