use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maltopic::pipeline::{
    self, build_embedder, build_gateway, PipelineConfig, PipelineError,
};
use maltopic::report::render_report;
use maltopic::{baseline, ingest};

#[derive(Parser)]
#[command(name = "maltopic", version, about = "Multi-agent LLM topic modeling for survey data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline: ingest, enrich, extract topics, dedup, metrics.
    Run {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an externally produced topics file against a corpus.
    Eval {
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional pipeline config for metric settings and the embedder.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Render the Markdown report for a completed run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Emit a cleaned, concatenated corpus for external baseline tools.
    PrepBaseline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<PipelineConfig, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("bad config {}: {e}", path.display()))
}

// Exit codes: 0 success, 1 usage/config error, 2 stage failure.
fn classify(err: &PipelineError) -> u8 {
    match err {
        PipelineError::Config(_) | PipelineError::TopicsFile { .. } => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), (u8, String)> {
    match cli.command {
        Command::Run { input, config, out } => {
            let config = load_config(&config).map_err(|e| (1, e))?;
            let gateway = build_gateway(&config);
            let embedder = build_embedder(&config);
            let artifacts = pipeline::run_pipeline(&config, &input, &out, &gateway, embedder.as_ref())
                .map_err(|e| (classify(&e), e.to_string()))?;
            for warning in &artifacts.warnings {
                eprintln!("warning: {warning}");
            }
            let report_path = out.join("report.md");
            std::fs::write(&report_path, render_report(&artifacts))
                .map_err(|e| (2, format!("cannot write report: {e}")))?;
            println!(
                "run complete: {} responses, {} topics, {:.6} USD; artifacts in {}",
                artifacts.enriched.len(),
                artifacts.dedup.topics.len(),
                artifacts.cost_summary.total_usd,
                out.display()
            );
            Ok(())
        }
        Command::Eval { topics, corpus, out, config } => {
            let config = match config {
                Some(path) => load_config(&path).map_err(|e| (1, e))?,
                None => default_eval_config(),
            };
            let embedder = build_embedder(&config);
            let report = pipeline::run_eval_only(
                &topics,
                &corpus,
                &config.coherence,
                &config.coverage,
                &config.stopword_set(),
                embedder.as_ref(),
            )
            .map_err(|e| (classify(&e), e.to_string()))?;
            std::fs::create_dir_all(&out).map_err(|e| (2, e.to_string()))?;
            let path = out.join("metrics.json");
            std::fs::write(&path, serde_json::to_vec_pretty(&report).unwrap())
                .map_err(|e| (2, e.to_string()))?;
            println!("metrics written to {}", path.display());
            Ok(())
        }
        Command::Report { run } => {
            let artifacts = pipeline::load_artifacts(&run)
                .map_err(|e| (classify(&e), e.to_string()))?;
            print!("{}", render_report(&artifacts));
            Ok(())
        }
        Command::PrepBaseline { input, config, out } => {
            let config = load_config(&config).map_err(|e| (1, e))?;
            let dataset = ingest::load_dataset(&input, &config.schema)
                .map_err(|e| (2, e.to_string()))?;
            let docs: Vec<_> = dataset
                .records
                .iter()
                .map(|r| baseline::concatenate_record(r, &dataset.schema))
                .collect();
            let cleaned = baseline::preprocess_for_baseline(&docs, &config.stopword_set());
            baseline::write_baseline_corpus(&cleaned, &out).map_err(|e| (2, e.to_string()))?;
            println!("baseline corpus ({} documents) written to {}", cleaned.len(), out.display());
            Ok(())
        }
    }
}

fn default_eval_config() -> PipelineConfig {
    serde_json::from_value(serde_json::json!({
        "schema": [],
        "enrichment": {"target_field": "", "context_fields": []}
    }))
    .expect("static default config")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
