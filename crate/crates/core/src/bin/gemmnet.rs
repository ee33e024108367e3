use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use gemmnet::coloss::ReconMode;
use gemmnet::data::{Scenario, Split};
use gemmnet::harness::{
    cmd_eval, cmd_plot, cmd_synth, cmd_train, compare_reports, format_comparison, read_metrics_csv, EvalOptions,
    RunConfig, SynthOptions, TrainOptions,
};

#[derive(Parser)]
#[command(name = "gemmnet", version, about = "RGIR/NDSM segmentation robust to a missing modality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic train/val/test dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        train: usize,
        #[arg(long, default_value_t = 2)]
        val: usize,
        #[arg(long, default_value_t = 2)]
        test: usize,
        #[arg(long, default_value_t = 256)]
        tile_size: usize,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train from a TOML run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Train the plain fusion baseline instead of the full model.
        #[arg(long)]
        baseline: bool,
        #[arg(long)]
        mode: Option<ReconMode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Evaluate a checkpoint under one or more modality scenarios.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Run config; defaults to the one stored in the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Repeatable; all three scenarios when omitted.
        #[arg(long)]
        scenario: Vec<Scenario>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
        /// Baseline checkpoint to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Also write predicted label maps as PNG.
        #[arg(long)]
        dump_predictions: bool,
    },
    /// Render the loss curve and per-class F1 bars of a run directory.
    Plot {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two metrics CSV files (the first is the base).
    Compare {
        base: PathBuf,
        new: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            train,
            val,
            test,
            tile_size,
            classes,
            force,
        } => {
            cmd_synth(&SynthOptions {
                seed,
                out_dir: out,
                n_train: train,
                n_val: val,
                n_test: test,
                tile_size,
                num_classes: classes,
                force,
            })?;
        }
        Command::Train {
            config,
            checkpoint,
            baseline,
            mode,
            seed,
            out,
            max_steps,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if baseline {
                cfg.model.baseline = true;
            }
            if let Some(mode) = mode {
                cfg.model.mode = mode;
                cfg.loss.mode = mode;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(n) = max_steps {
                cfg.max_steps = n;
            }
            let summary = cmd_train(&TrainOptions {
                config: cfg,
                resume: checkpoint,
            })?;
            println!("trained to step {} in {}", summary.steps, summary.run_dir.display());
            if let Some(m) = summary.best_val_mf1 {
                println!("best validation mF1 (full): {:.2}", 100.0 * m);
            }
        }
        Command::Eval {
            checkpoint,
            config,
            scenario,
            split,
            out,
            compare,
            dump_predictions,
        } => {
            let mut opts = EvalOptions::new(checkpoint, out);
            opts.config = config;
            opts.split = split;
            if !scenario.is_empty() {
                opts.scenarios = scenario;
            }
            opts.compare = compare;
            opts.dump_predictions = dump_predictions;
            print!("{}", cmd_eval(&opts)?.table);
        }
        Command::Plot { run_dir, out } => {
            for p in cmd_plot(&run_dir, out.as_deref())? {
                println!("{}", p.display());
            }
        }
        Command::Compare { base, new, out } => {
            let cmp = compare_reports(&read_metrics_csv(&base)?, &read_metrics_csv(&new)?);
            anyhow::ensure!(!cmp.is_empty(), "no rows in common between the two files");
            let text = format_comparison(&cmp);
            if let Some(out) = out {
                std::fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
            }
            print!("{text}");
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
