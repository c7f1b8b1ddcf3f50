use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use torusflow::experiment::{exit_code, run, Command, ExperimentConfig, PLOT_SCRIPT};
use torusflow::Error;

#[derive(Parser)]
#[command(name = "torusflow", version, about = "Special flows over minimal translations of the two-torus")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Analysis seed, overriding `analysis.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the translation pair and verify its schedule.
    BuildPair(Common),
    /// Assemble the ceiling and write its coefficients.
    BuildCeiling(Common),
    /// Compare fast and naive Birkhoff sums.
    Birkhoff(Common),
    /// Tower geometry and rank-one defect per level.
    TowerReport(Common),
    /// Stretch scan over the schedule time windows.
    StretchScan(Common),
    /// Staircase deviations on sampled tower levels.
    Staircase(Common),
    /// Correlation sweep of a flow box with itself.
    Correlation(Common),
    /// Every stage above plus a summary document.
    FullReport(Common),
    /// Print a matplotlib script that plots the CSV outputs of a run.
    PlotScript,
}

fn load(c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    if let Some(s) = c.seed {
        cfg.analysis.seed = s;
    }
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| Error::Config(e.to_string()))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::PlotScript => {
            print!("{PLOT_SCRIPT}");
            return ExitCode::SUCCESS;
        }
        Cmd::BuildPair(c) => (Command::BuildPair, c),
        Cmd::BuildCeiling(c) => (Command::BuildCeiling, c),
        Cmd::Birkhoff(c) => (Command::Birkhoff, c),
        Cmd::TowerReport(c) => (Command::TowerReport, c),
        Cmd::StretchScan(c) => (Command::StretchScan, c),
        Cmd::Staircase(c) => (Command::Staircase, c),
        Cmd::Correlation(c) => (Command::Correlation, c),
        Cmd::FullReport(c) => (Command::FullReport, c),
    };
    match load(&common).and_then(|cfg| run(command, &cfg)) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("torusflow {command}: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
