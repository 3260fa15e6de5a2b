use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use iab_sim::harness::{emit_results, run_experiment, Format, SimConfig};
use iab_sim::Result;

/// Runs one simulation experiment and writes its result rows.
#[derive(Debug, Parser)]
#[command(name = "iab-sim", version)]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// fig3-microstrip, fig3-od, fig4-backhaul, fig4-access, fig5-schemes or fig6-rsi-sweep.
    #[arg(long)]
    experiment: String,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    trials: Option<usize>,

    /// Output file.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, default_value = "csv")]
    format: String,

    /// Start from the small desk-scale preset.
    #[arg(long)]
    desk_scale: bool,
}

fn run(cli: &Cli) -> Result<()> {
    let format: Format = cli.format.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => SimConfig::from_file(path, cli.desk_scale)?,
        None if cli.desk_scale => SimConfig::desk(),
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let result = run_experiment(&cli.experiment, &cfg)?;
    emit_results(&result, format, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={} msg={msg:?}", e.kind());
            ExitCode::from(2)
        }
    }
}
