//! `noisespec`: file-based pipeline for continuous-drive qubit noise
//! spectroscopy. See `docs/config.md` for the configuration schema.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use noisespec_cli::artifacts::{Artifacts, Provenance};
use noisespec_cli::commands::{self, Ctx};
use noisespec_cli::config::{self, RunConfig};
use noisespec_cli::error::{CliError, CliResult};
use noisespec_cli::pipeline;

#[derive(Debug, Parser)]
#[command(name = "noisespec", version, about = "Qubit noise spectroscopy pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config value (default `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel inner loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Synthesize noise trajectories and check them against the PSD.
    Synth,
    /// Monte-Carlo decay curves and the drive-strength scan.
    Simulate,
    /// Rectangular estimate and gradient refinement of the PSD.
    Estimate,
    /// Fit a strong tone from Rabi-flopping curves.
    LlnFit,
    /// Separate laser and magnetic noise from two transitions.
    Discriminate,
    /// Heterodyne beat-note spectrum.
    Beatnote,
    /// Every stage from one config, with a planted-vs-recovered summary.
    Pipeline,
}

fn load(cli: &Cli) -> CliResult<Ctx> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    if !path.exists() {
        return Err(CliError::MissingInput(path.clone()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let base = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    let out = match (&cli.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => config::resolve(&base, o),
        (None, None) => PathBuf::from("out"),
    };
    Ok(Ctx {
        seed: cfg.seed,
        cfg,
        base,
        out,
    })
}

fn execute(cmd: Command, ctx: &Ctx, art: &mut Artifacts) -> CliResult<()> {
    match cmd {
        Command::Synth => commands::synth(ctx, art),
        Command::Simulate => commands::simulate(ctx, art),
        Command::Estimate => commands::estimate(ctx, art),
        Command::LlnFit => commands::lln_fit(ctx, art),
        Command::Discriminate => commands::discriminate(ctx, art),
        Command::Beatnote => commands::beatnote(ctx, art),
        Command::Pipeline => pipeline::pipeline(ctx, art),
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let ctx = load(cli)?;
    let hashed = serde_json::to_value(&ctx.cfg)?;
    let provenance = Provenance::new(ctx.seed, &hashed);
    let mut art = Artifacts::new(ctx.out.clone(), &provenance);
    match execute(cli.command, &ctx, &mut art) {
        Ok(()) => {
            for f in art.written() {
                log::info!("wrote {}", f.display());
            }
            Ok(())
        }
        Err(e) => {
            art.cleanup();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
