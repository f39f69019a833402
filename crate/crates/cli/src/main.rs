use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use neuacf::config::RunConfig;
use neuacf::pipeline::{
    cmd_evaluate, cmd_export_factors, cmd_prepare, cmd_report, cmd_train, EPOCH_LOG_HEADER,
};
use neuacf::{FusionMode, Side};

/// Aspect-level neural collaborative filtering over heterogeneous networks.
#[derive(Parser)]
#[command(name = "neuacf", version)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Override the fusion mode: attention, self_attention, average or single:<aspect>.
    #[arg(long, global = true)]
    fusion: Option<FusionMode>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split the data and write the similarity matrices of every aspect.
    Prepare,
    /// Train on prepared data; writes the log and the best checkpoint.
    Train,
    /// Evaluate a checkpoint (default: the run's best) against ItemPop.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write one aspect's latent factors with raw ids.
    ExportFactors {
        #[arg(long)]
        side: Side,
        /// Aspect label or `user_path-item_path` pair.
        #[arg(long)]
        aspect: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Destination file (default: inside the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate every evaluated run under the output directory.
    Report,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let Some(path) = &cli.config else {
        bail!("--config is required for this command");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(output) = &cli.output {
        cfg.output = output.clone();
    }
    if let Some(fusion) = &cli.fusion {
        cfg.fusion = fusion.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Prepare => {
            let cfg = load_config(&cli)?;
            let m = cmd_prepare(&cfg)?;
            if let Some(d) = &m.dataset {
                println!(
                    "{} users, {} items, {} ratings, density {:.3}%",
                    d.n_users,
                    d.n_items,
                    d.n_ratings,
                    100.0 * d.density
                );
            }
            println!(
                "{} training interactions, {} test users",
                m.n_train, m.n_test
            );
            for s in &m.similarities {
                println!(
                    "{:<12} {:<5} {:<8} nnz {}",
                    s.aspect, s.side, s.metapath, s.nnz
                );
            }
        }
        Command::Train => {
            let cfg = load_config(&cli)?;
            println!("{EPOCH_LOG_HEADER}");
            let outcome = cmd_train(&cfg)?;
            for line in &outcome.history {
                println!("{line}");
            }
            let best = &outcome.best_report;
            let m = best.get(10).context("missing HR@10")?;
            println!(
                "best epoch {} hr@10 {:.4} ndcg@10 {:.4}",
                best.epoch.unwrap_or(0),
                m.hr,
                m.ndcg
            );
        }
        Command::Evaluate { checkpoint } => {
            let cfg = load_config(&cli)?;
            let ev = cmd_evaluate(&cfg, checkpoint.as_deref())?;
            print!("{}", ev.to_text());
        }
        Command::ExportFactors {
            side,
            aspect,
            checkpoint,
            out,
        } => {
            let cfg = load_config(&cli)?;
            let path =
                cmd_export_factors(&cfg, checkpoint.as_deref(), *side, aspect, out.as_deref())?;
            println!("{}", path.display());
        }
        Command::Report => {
            let output = match (&cli.output, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => load_config(&cli)?.output,
                (None, None) => bail!("report needs --output or --config"),
            };
            print!("{}", cmd_report(&output)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
