use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wfbt_cli::commands::{cmd_backtest, cmd_capacity, cmd_gen_data, cmd_spa, cmd_stress};
use wfbt_cli::config::RunConfig;
use wfbt_cli::CliError;

/// Walk-forward backtester for a single daily OHLC series.
#[derive(Parser)]
#[command(name = "wfbt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true, env = "WFBT_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for resampling and synthetic data (overrides `analytics.seed` and `synthetic.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true, env = "WFBT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the walk-forward backtest and write report, ledger, equity and manifest.
    Backtest,
    /// Run the cost, impact, latency and ablation grid.
    Stress,
    /// Compute the growth curve, zero-growth participation and AUM capacity.
    Capacity,
    /// Run the candidate grid and the superior-predictive-ability test.
    Spa,
    /// Write a seeded synthetic OHLC dataset as `synthetic.csv`.
    GenData,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.analytics.seed = seed;
        cfg.synthetic.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
    match cli.command {
        Command::Backtest => {
            let r = cmd_backtest(&cfg, &out)?;
            match &r.report.summary {
                Some(s) => println!(
                    "{} OOS days, sharpe {}, ann return {:.4}%, max drawdown {:.4}%",
                    r.report.oos_days,
                    s.sharpe.map_or("n/a".to_string(), |v| format!("{v:.3}")),
                    s.ann_return * 100.0,
                    s.max_drawdown * 100.0
                ),
                None => println!("{} OOS days across {} slices", r.report.oos_days, r.report.slices.len()),
            }
            for n in &r.report.notes {
                eprintln!("note: {n}");
            }
        }
        Command::Stress => {
            let r = cmd_stress(&cfg, &out)?;
            println!("{} stress cells written", r.cells.len());
        }
        Command::Capacity => {
            let r = cmd_capacity(&cfg, &out)?;
            println!("L_max = {:.4e}, AUM_max = {}", r.l_max, r.aum_max.map_or("n/a".into(), |a| format!("{a:.4e}")));
            if let Some(note) = r.detail.as_ref().and_then(|d| d.divergence_note.as_ref()) {
                eprintln!("note: {note}");
            }
        }
        Command::Spa => {
            let r = cmd_spa(&cfg, &out)?;
            println!("SPA p-value {:.4} over {} configs", r.result.p_value, r.result.num_configs);
        }
        Command::GenData => {
            let path = cmd_gen_data(&cfg, &out)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
