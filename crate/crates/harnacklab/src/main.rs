use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use harnacklab::cache::CACHE_ENV;
use harnacklab::{config, CliError, RunOptions, SuiteReport};

#[derive(Parser)]
#[command(
    name = "harnacklab",
    version,
    about = "Heat kernel and Harnack condition checks for jump processes on finite spaces"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Md,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured checkers and write the report.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; the report goes to stdout when neither this nor `output.dir` is set.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also run one refinement level up and flag unstable constants.
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Monte Carlo estimate of the configured estimand.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Render a saved JSON report.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        format: Format,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("harnacklab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    match cli.cmd {
        Cmd::Check { config, out, refine, threads } => {
            let cfg = config::load(&config)?;
            let report = harnacklab::check(&cfg, &RunOptions { threads, refine, cache })?;
            match out.or_else(|| cfg.output.dir.clone()) {
                Some(dir) => {
                    report.write_all(&dir, cfg.output.csv, cfg.output.markdown)?;
                    eprint!("{}", report.to_markdown());
                }
                None => println!("{}", report.to_json()),
            }
        }
        Cmd::Simulate { config, paths, threads } => {
            let cfg = config::load(&config)?;
            let sim = harnacklab::simulate(&cfg, paths, &RunOptions { threads, refine: false, cache })?;
            let json = serde_json::to_string_pretty(&sim).map_err(|e| CliError::Runtime(e.to_string()))?;
            if let Some(dir) = &cfg.output.dir {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("simulation.json"), &json)?;
            }
            println!("{json}");
        }
        Cmd::Report { input, format } => {
            let report = SuiteReport::from_json(&std::fs::read_to_string(&input)?)?;
            match format {
                Format::Md => print!("{}", report.to_markdown()),
                Format::Csv => print!("{}", report.to_csv()?),
            }
        }
    }
    Ok(())
}
