use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use panoscene::pipeline::{GeneratorConfig, Pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(version, about = "Panorama-to-3D scene pipeline, one stage at a time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Serve every generator from this base URL.
    #[arg(long, global = true, conflicts_with = "stub")]
    endpoint: Option<String>,
    /// Per-request timeout for remote generators, in seconds.
    #[arg(long, global = true, default_value_t = 300.0)]
    timeout: f64,
    /// Use the deterministic stub generators whatever the config says.
    #[arg(long, global = true)]
    stub: bool,
    /// Print one JSON object per stage event on stdout.
    #[arg(long, global = true)]
    progress_json: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate views and compose the panorama.
    Compose,
    /// Estimate panorama depth and lift it to points.
    Lift,
    /// Build base and supplementary cameras and their views.
    Supp,
    /// Synthesize moving-scene frames.
    Move,
    /// Align moving-scene depth to the panorama.
    Align,
    /// Fuse panorama and moving-scene points.
    Fuse,
    /// Splat-render the fused cloud from the base cameras.
    Render,
    /// Write the training bundle.
    Export,
    /// Every stage in order.
    Run,
}

impl Command {
    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Compose => vec![Stage::Compose],
            Command::Lift => vec![Stage::Lift],
            Command::Supp => vec![Stage::Supp],
            Command::Move => vec![Stage::Move],
            Command::Align => vec![Stage::Align],
            Command::Fuse => vec![Stage::Fuse],
            Command::Render => vec![Stage::Render],
            Command::Export => vec![Stage::Export],
            Command::Run => Stage::ALL.to_vec(),
        }
    }
}

fn run(cli: &Cli) -> panoscene::Result<()> {
    let path = cli.config.as_ref().ok_or_else(|| panoscene::Error::Parameter("--config is required".into()))?;
    let mut config = PipelineConfig::load(path)?;
    if cli.stub {
        if !matches!(config.generators, GeneratorConfig::Stub { .. } | GeneratorConfig::Analytic { .. }) {
            config.generators = GeneratorConfig::default();
        }
    } else if let Some(url) = &cli.endpoint {
        config.generators = GeneratorConfig::Remote {
            endpoint: Some(url.clone()),
            timeout_s: cli.timeout,
            superres_factor: 4,
        };
    }
    let out = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("panoscene-out"));
    let mut pipeline = Pipeline::new(config, &out)?;
    if cli.progress_json {
        pipeline = pipeline.on_progress(|ev| {
            if let Ok(line) = serde_json::to_string(ev) {
                println!("{line}");
            }
        });
    }
    for stage in cli.command.stages() {
        pipeline.run_stage(stage)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
