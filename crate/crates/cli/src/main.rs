use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use pipeserve_core::engine::EngineRegistry;
use pipeserve_core::gateway::{self, config::PORT_ENV, Node, ServerConfig};
use pipeserve_core::loadgen::{self, BenchConfig, Mode, Target};
use tracing::info;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "pipeserve", version, about = "Serve retrieval pipelines over HTTP, or load-test a node")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a node from a JSON config file.
    Serve {
        config: PathBuf,
        /// Overrides both the config's `listen` port and $PIPESERVE_PORT.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Send a query file to a node and report throughput and latency.
    Bench(Box<BenchArgs>),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_parser = ["batched", "sequential"])]
    mode: String,
    #[arg(long)]
    endpoint: String,
    /// One query per line, or one JSON `/query` body per line.
    #[arg(long)]
    queries: PathBuf,
    /// Max requests in flight in batched mode (default: all of them).
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long, conflicts_with = "pipeline", required_unless_present = "pipeline")]
    service: Option<String>,
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long, requires = "pipeline")]
    collection: Option<String>,
    #[arg(long)]
    limit: Option<usize>,
    /// Make every query unique so no cache can answer it.
    #[arg(long)]
    bust_cache: bool,
    /// Raw per-request CSV log.
    #[arg(long, default_value = "bench-log.csv")]
    log: PathBuf,
    /// Machine-readable JSON report.
    #[arg(long, default_value = "bench-report.json")]
    report: PathBuf,
}

async fn serve(config_path: PathBuf, port: Option<u16>) -> anyhow::Result<()> {
    let config = ServerConfig::load(&config_path).with_context(|| format!("loading {}", config_path.display()))?;
    let env_port = std::env::var(PORT_ENV).ok();
    let addr = gateway::resolve_listen(config.listen.as_deref(), env_port.as_deref(), port)?;
    let node = Node::start(config, EngineRegistry::with_builtins()).await?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    info!(services = ?node.service_names(), "node ready");
    gateway::serve_with_shutdown(node, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

async fn bench(args: BenchArgs) -> anyhow::Result<bool> {
    let mode: Mode = args.mode.parse()?;
    let target = match (args.service, args.pipeline) {
        (Some(s), None) => Target::Service(s),
        (None, Some(pipeline)) => Target::Pipeline {
            pipeline,
            collection: args.collection,
        },
        _ => bail!("give exactly one of --service or --pipeline"),
    };
    let mut config = BenchConfig::new(args.endpoint, target);
    config.concurrency = args.concurrency;
    config.limit = args.limit;
    config.bust_cache = args.bust_cache;

    let queries = loadgen::load_queries(&args.queries).with_context(|| format!("reading {}", args.queries.display()))?;
    let (report, records) = loadgen::run(&config, mode, &queries).await?;
    loadgen::write_log(&args.log, &records)?;
    std::fs::write(&args.report, serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.to_table());
    println!("log: {}  report: {}", args.log.display(), args.report.display());
    Ok(report.error_count == 0)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Serve { config, port } => serve(config, port).await.map(|_| true),
        Command::Bench(args) => bench(*args).await,
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
