use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use olcais::measurements::{compare_policies, group_by_policy};
use olcais::runner::{comparison_csv, dump_batch, read_metrics};
use olcais::{dump_csv, run_experiment, run_replications, ExperimentConfig, PolicyKind};

mod chart;

/// Overrides `-o` for `run` and `replicate`.
const OUTPUT_ENV: &str = "OLCAIS_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "olcais", version, about = "Run, replicate, serve and report OL-CAIS experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its CSV files.
    Run {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run `count` seeds per policy and write the batch tables.
    Replicate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short = 'n', long, value_parser = clap::value_parser!(u32).range(1..))]
        count: u32,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Comma-separated policy names; defaults to the config's policy.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(short, long, env = olcais_service::PORT_ENV, default_value_t = olcais_service::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Summarise every metrics.csv under a directory.
    Report {
        #[arg(short, long)]
        input: PathBuf,
        /// Comparison table; one SVG chart per metric is written beside it.
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn output_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()) {
        return Ok(dir.into());
    }
    match flag.or_else(|| config.output_dir.clone()) {
        Some(dir) => Ok(dir),
        None => bail!("no output directory: pass -o, set {OUTPUT_ENV}, or set output_dir in the config"),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn metrics_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            metrics_files(&path, out)?;
        } else if entry.file_name() == "metrics.csv" {
            out.push(path);
        }
    }
    Ok(())
}

fn report(input: &Path, output: &Path) -> Result<()> {
    let mut files = Vec::new();
    metrics_files(input, &mut files)?;
    if files.is_empty() {
        bail!("no metrics.csv under {}", input.display());
    }
    let mut reports = Vec::new();
    for f in &files {
        reports.extend(read_metrics(f)?);
    }
    let table = compare_policies(&group_by_policy(&reports));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(output, comparison_csv(&table)).with_context(|| format!("writing {}", output.display()))?;
    for path in chart::write_charts(&table, output)? {
        log::info!("wrote {}", path.display());
    }
    println!("{} reports from {} files, {} policies", reports.len(), files.len(), table.len());
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run { config, output } => {
            let cfg = load(&config)?;
            let dir = output_dir(output, &cfg)?;
            let result = run_experiment(&cfg)?;
            dump_csv(&result, &dir)?;
            println!(
                "{} iterations, {} degradations, finished {:?}; wrote {}",
                result.records.len(),
                result.degradations(),
                result.finish,
                dir.display()
            );
        }
        Cmd::Replicate {
            config,
            count,
            output,
            policies,
        } => {
            let cfg = load(&config)?;
            let dir = output_dir(output, &cfg)?;
            let batch = run_replications(&cfg, count as usize, &policies)?;
            dump_batch(&batch, &dir)?;
            println!("{} runs, {} reports; wrote {}", batch.results.len(), batch.reports.len(), dir.display());
        }
        Cmd::Serve { port, host } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                println!("listening on http://{}", listener.local_addr()?);
                olcais_service::serve(listener).await?;
                anyhow::Ok(())
            })?;
        }
        Cmd::Report { input, output } => report(&input, &output)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
