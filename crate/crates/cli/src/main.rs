use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use ctxseg_cli::{commands, report, service};
use ctxseg_core::config::{DataSource, ExperimentConfig};
use ctxseg_core::evaluation::ContextLabelMode;
use ctxseg_core::interaction::Protocol;

#[derive(Parser)]
#[command(name = "ctxseg", version, about = "Interactive in-context segmentation")]
struct Cli {
    /// Experiment configuration (JSON). Defaults to the built-in toy preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Manifest directory for training and evaluation, or the session
    /// store for `serve`.
    #[arg(long, global = true, env = "CTXSEG_DATA_ROOT")]
    data_root: Option<PathBuf>,
    #[arg(long, global = true)]
    resolution: Option<usize>,
    #[arg(long, global = true)]
    split_seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Clicks,
    Scribbles,
    Both,
}

impl ProtocolArg {
    fn protocols(self) -> Vec<Protocol> {
        match self {
            ProtocolArg::Clicks => vec![Protocol::CenterClicks],
            ProtocolArg::Scribbles => vec![Protocol::CenterlineScribbles],
            ProtocolArg::Both => vec![Protocol::CenterClicks, Protocol::CenterlineScribbles],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    BinaryPred,
    SoftPred,
    GroundTruth,
}

impl From<ModeArg> for ContextLabelMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::BinaryPred => ContextLabelMode::BinaryPred,
            ModeArg::SoftPred => ContextLabelMode::SoftPred,
            ModeArg::GroundTruth => ContextLabelMode::GroundTruth,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Writes the effective configuration as JSON.
    InitConfig {
        #[arg(long)]
        out: PathBuf,
        /// Start from the full-size preset instead of the toy one.
        #[arg(long)]
        full_scale: bool,
    },
    /// Trains a model; `--checkpoint` resumes from a saved run.
    Train {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Sequential dataset segmentation; writes sequential.csv and a summary.
    EvalSequential {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        protocol: ProtocolArg,
        #[arg(long = "mode", value_enum, num_args = 1.., default_value = "binary-pred")]
        modes: Vec<ModeArg>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        images: Option<usize>,
    },
    /// Context-only Dice against context size; writes context_sweep.csv.
    EvalContext {
        #[arg(long)]
        out: PathBuf,
    },
    /// Dice over correction steps per context size; writes interactive_sweep.csv.
    EvalInteractive {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "clicks")]
        protocol: ProtocolArg,
        #[arg(long, default_value_t = 3)]
        steps: usize,
    },
    /// Simulates prompts for a mask PNG and writes them as JSON.
    SimulatePrompts {
        #[arg(long)]
        mask: PathBuf,
        /// Current prediction; when given, correction prompts are simulated.
        #[arg(long)]
        prediction: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "clicks")]
        protocol: ProtocolArg,
        /// Use the randomized training sampler instead of the evaluation protocol.
        #[arg(long)]
        sampler: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders SVG charts from the tables in an evaluation directory.
    ExportReport {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the HTTP session service.
    Serve {
        #[arg(long, env = "CTXSEG_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => ExperimentConfig::toy(),
    };
    if let Some(seed) = cli.seed {
        cfg.training.seed = seed;
        cfg.protocol.seed = seed;
        cfg.sweep.seed = seed;
        cfg.prompts.seed = seed;
    }
    if let Some(r) = cli.resolution {
        cfg.model.resolution = r;
        cfg.data.toy.resolution = r;
    }
    if let Some(s) = cli.split_seed {
        cfg.data.split_seed = s;
    }
    if !matches!(cli.command, Command::Serve { .. }) {
        if let Some(root) = &cli.data_root {
            cfg.data.root = Some(root.clone());
            cfg.data.source = DataSource::Manifests;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn single_protocol(p: ProtocolArg) -> Result<Protocol> {
    match p.protocols()[..] {
        [one] => Ok(one),
        _ => anyhow::bail!("choose one protocol for this command"),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = effective_config(&cli)?;
    match &cli.command {
        Command::InitConfig { out, full_scale } => {
            let cfg = if *full_scale { ExperimentConfig::full_scale() } else { cfg };
            cfg.save(out)?;
        }
        Command::Train { out, steps } => {
            if let Some(s) = steps {
                cfg.training.total_steps = *s;
            }
            commands::run_train(&cfg, out, cli.checkpoint.as_deref())?;
        }
        Command::EvalSequential { out, protocol, modes, runs, images } => {
            let (model, _) = commands::load_model(cli.checkpoint.as_deref())?;
            if let Some(r) = runs {
                cfg.protocol.num_simulations = *r;
            }
            if let Some(n) = images {
                cfg.protocol.num_images = *n;
            }
            let modes: Vec<ContextLabelMode> = modes.iter().map(|&m| m.into()).collect();
            commands::run_eval_sequential(&cfg, &model, &protocol.protocols(), &modes, out)?;
        }
        Command::EvalContext { out } => {
            let (model, _) = commands::load_model(cli.checkpoint.as_deref())?;
            commands::run_eval_context(&cfg, &model, out)?;
        }
        Command::EvalInteractive { out, protocol, steps } => {
            let (model, _) = commands::load_model(cli.checkpoint.as_deref())?;
            commands::run_eval_interactive(&cfg, &model, single_protocol(*protocol)?, *steps, out)?;
        }
        Command::SimulatePrompts { mask, prediction, protocol, sampler, out } => {
            commands::run_simulate_prompts(&cfg, mask, prediction.as_deref(), single_protocol(*protocol)?, *sampler, out)?;
        }
        Command::ExportReport { input, out } => {
            for path in report::export_report(input, out)? {
                println!("{}", path.display());
            }
        }
        Command::Serve { port, host } => {
            let (model, ck) = commands::load_model(cli.checkpoint.as_deref())?;
            let sessions = cli.data_root.clone().unwrap_or_else(|| PathBuf::from("sessions"));
            let state = service::AppState::open(model, ck.display().to_string(), &sessions)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), *port)).await?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, service::router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
