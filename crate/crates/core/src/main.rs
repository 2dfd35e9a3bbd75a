use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use evistream::harness::output::{render_csv, render_json};
use evistream::harness::{compare, run_experiment, ExperimentConfig, OutputFormat};
use evistream::{Error, Strategy};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "evistream",
    version,
    about = "Streaming evidential view selection on a deterministic voxel generator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one strategy and write per-chunk metrics.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Strategy to run; overrides the config file.
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Run every strategy on shared seeds and write one merged table.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Number of independent seed sets.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Write zero wall times so output is byte-stable.
    #[arg(long)]
    no_timing: bool,
}

fn load_config(common: &CommonArgs, strategy: Option<Strategy>) -> Result<ExperimentConfig, Error> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        config.apply_text(&text)?;
    }
    config.apply_text(&common.overrides.join("\n"))?;
    if let Some(s) = strategy {
        config.stream.strategy = s;
    }
    if let Some(f) = common.format {
        config.format = f;
    }
    if let Some(out) = &common.out {
        config.output_path = Some(out.clone());
    }
    if common.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    config.validate()?;
    Ok(config)
}

fn execute(command: Command) -> Result<(), Error> {
    let (common, strategy, all) = match command {
        Command::Run { common, strategy } => (common, strategy, false),
        Command::Compare { common } => (common, None, true),
    };
    let config = load_config(&common, strategy)?;
    let timing = !common.no_timing;
    let rows = if all {
        compare(&config, common.seeds, timing)?
    } else {
        run_experiment(&config, common.seeds, timing)?
    };
    let text = match config.format {
        OutputFormat::Csv => render_csv(&rows),
        OutputFormat::Json => render_json(&rows, &config)?,
    };
    match &config.output_path {
        Some(path) => fs::write(path, text).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("invalid arguments"));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
