use clap::{Parser, Subcommand};
use glb::{ExperimentConfig, HarnessError, Kind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "glb", version, about = "Radial Ginzburg-Landau laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue the simulation recorded in this manifest.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve initial data and write trajectory, snapshots and reports.
    Simulate(Common),
    /// Fit a bubble decomposition to a field.
    Decompose(Common),
    /// Low spectrum of L±, the Y1/Y2 pair and the test profiles.
    Spectrum(Common),
    /// Run the invariant suite.
    Verify(Common),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Decompose(a) => (Kind::Decompose, a),
        Command::Spectrum(a) => (Kind::Spectrum, a),
        Command::Verify(a) => (Kind::Verify, a),
    };
    match dispatch(kind, args) {
        Ok(o) => {
            if o.manifest.blowup {
                log::info!("run stopped at the blow-up condition; see {}", o.manifest_path().display());
            }
            ExitCode::from(o.exit_code as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(kind: Kind, args: Common) -> glb::Result<glb::RunOutcome> {
    let cfg = args.config.as_deref().map(ExperimentConfig::load).transpose()?;
    if let Some(m) = args.resume {
        if kind != Kind::Simulate {
            return Err(HarnessError::Validation("--resume only applies to simulate".into()));
        }
        if args.out.is_some() {
            return Err(HarnessError::Validation("--resume writes next to its manifest; drop --out".into()));
        }
        return glb::resume(&m, cfg);
    }
    let cfg = cfg.ok_or_else(|| HarnessError::Validation("--config is required".into()))?;
    glb::run(cfg, kind, args.out)
}
