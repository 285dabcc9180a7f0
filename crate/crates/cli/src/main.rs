use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msstokes_cli::{cmd_report, CliError, Overrides, RunConfig, Session, Stage};

#[derive(Parser)]
#[command(name = "msstokes", version, about = "Multiscale hybridized DG solver for Stokes flow in perforated domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import the mesh; write the native file and a VTK preview.
    Mesh(Common),
    /// Run one pipeline stage, or all of them.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
    },
    /// Error study over M_off, with and without oversampling.
    Study(Common),
    /// Print the reports stored in an output directory.
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated basis counts per block.
    #[arg(long, value_delimiter = ',')]
    m_off: Option<Vec<usize>>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn session(&self) -> Result<Session, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        config.apply(&Overrides {
            m_off: self.m_off.clone(),
            layers: self.layers,
            gamma: self.gamma,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
        });
        let session = Session::new(config, false)?;
        let workers = session.config.solver.workers;
        if workers > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build_global()
                .map_err(|e| CliError::Config(format!("solver.workers: {e}")))?;
        }
        Ok(session)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mesh(c) => {
            c.session()?.cmd_mesh()?;
        }
        Command::Solve { common, stage } => {
            common.session()?.cmd_solve(stage)?;
        }
        Command::Study(c) => {
            c.session()?.cmd_study()?;
        }
        Command::Report { config, out } => {
            let dir = match (out, config) {
                (Some(o), _) => o,
                (None, Some(c)) => RunConfig::load(&c)?.output,
                (None, None) => PathBuf::from("out"),
            };
            cmd_report(&dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
