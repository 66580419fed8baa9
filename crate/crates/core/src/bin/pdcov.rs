use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pdcov::report::{self, OutputFormat, RunOptions, RunOutput};

#[derive(Parser)]
#[command(name = "pdcov", version, about = "Pairwise-difference covariance estimators for small-sample PCA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep over n on a synthetic Gaussian population
    Simulate(Common),
    /// Subsampling sweep on an expression table
    Analyze(WithData),
    /// Estimate covariance matrices for a single dataset
    Estimate(WithData),
    /// Merge result tables from earlier runs into a ranked markdown report
    Report {
        /// Directory holding overdispersion.csv, explained.csv, cse.csv
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

#[derive(Args)]
struct Common {
    /// TOML config file, or manifest.json from an earlier run
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "pdcov-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Overrides master_seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Overrides pcs_reported
    #[arg(long)]
    pcs: Option<usize>,
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct WithData {
    /// Expression table (overrides data_file)
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn options(self) -> RunOptions {
        RunOptions {
            config: self.config,
            out: self.out,
            format: match self.format {
                Format::Csv => OutputFormat::Csv,
                Format::Markdown => OutputFormat::Markdown,
            },
            seed: self.seed,
            threads: self.threads,
            pcs: self.pcs,
            data: None,
            input: None,
            verbose: self.verbose,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(c) => report::cmd_simulate(&c.options()),
        Command::Analyze(w) => report::cmd_analyze(&RunOptions {
            data: w.data,
            ..w.common.options()
        }),
        Command::Estimate(w) => report::cmd_estimate(&RunOptions {
            data: w.data,
            ..w.common.options()
        }),
        Command::Report { input, common } => report::cmd_report(&RunOptions {
            input: Some(input),
            ..common.options()
        }),
    };
    match result {
        Ok(RunOutput { files, .. }) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::from(report::EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
