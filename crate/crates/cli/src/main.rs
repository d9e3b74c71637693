//! `fable`: synthesize facet-conditioned triplets, mine hard negatives,
//! build benchmark pools and evaluate faceted retrieval runs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "fable", version, about = "Facet-conditioned triplet synthesis and faceted retrieval evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// TOML run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `mock` or `http`
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Maximum in-flight backend calls
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Base directory for relative output paths
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Validate a document file against a facet schema
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        /// Write the validated documents here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage 1: summarize each facet of each document
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(long, default_value = "units.jsonl")]
        out: PathBuf,
        #[arg(long)]
        template_dir: Option<PathBuf>,
    },
    /// Stage 2: generate similar and dissimilar facet components
    Synthesize {
        #[arg(long)]
        units: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(long, default_value = "units2.jsonl")]
        out: PathBuf,
        #[arg(long)]
        variants: Option<u32>,
        #[arg(long)]
        template_dir: Option<PathBuf>,
    },
    /// Stage 3: recompose units into pseudo-documents and triplets
    Recompose {
        #[arg(long)]
        units: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        /// cross_all, sample_one or random_negative
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        per_doc_cap: Option<usize>,
        #[arg(long)]
        separator: Option<String>,
        #[arg(long, default_value = "triplets.jsonl")]
        out: PathBuf,
        #[arg(long, default_value = "pseudo_documents.jsonl")]
        pseudo_out: PathBuf,
    },
    /// Regenerate easy negatives and emit hard-negative triplets
    Mine {
        #[arg(long)]
        units: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(long)]
        easy: Option<f64>,
        #[arg(long)]
        ceiling: Option<f64>,
        #[arg(long)]
        rounds: Option<u32>,
        /// keep_warn or drop
        #[arg(long)]
        over_ceiling: Option<String>,
        #[arg(long, default_value = "triplets_hn.jsonl")]
        out: PathBuf,
        #[arg(long, default_value = "mining_report.json")]
        report: PathBuf,
        #[arg(long, default_value = "units_mined.jsonl")]
        units_out: PathBuf,
        #[arg(long, default_value = "pseudo_documents_hn.jsonl")]
        pseudo_out: PathBuf,
        #[arg(long)]
        template_dir: Option<PathBuf>,
    },
    /// Score a run's embeddings against relevance pools
    Evaluate {
        #[arg(long)]
        pools: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Comma-separated fractions of the pool size
        #[arg(long, value_delimiter = ',')]
        percents: Option<Vec<f64>>,
        /// linear or exponential
        #[arg(long)]
        gain: Option<String>,
        #[arg(long)]
        map_threshold: Option<u8>,
        /// cosine or negative_euclidean
        #[arg(long)]
        similarity: Option<String>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Per-query comparison of two evaluation reports
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select queries and candidate pools, or aggregate annotations
    Benchbuild(commands::BenchArgs),
    /// Run every stage end to end
    Pipeline {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        schema: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        mine: bool,
        #[arg(long)]
        train_ratio: Option<f64>,
        #[arg(long)]
        variants: Option<u32>,
        #[arg(long)]
        template_dir: Option<PathBuf>,
        /// Reuse per-document outputs already in the output directory
        #[arg(long)]
        resume: bool,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<fable_core::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
