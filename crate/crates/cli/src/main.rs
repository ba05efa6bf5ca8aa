//! `pcd`: build datasets, train and evaluate mapping pipelines, attack them
//! with FGSM and export the mapped images.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "pcd", version, about = "Point-cloud-to-image classification experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON experiment config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// basic_project, basic_project_leaky, graphdraw or zbuffer.
    #[arg(long, global = true)]
    pipeline: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// FGSM step size.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Root of all outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test clouds, label CSVs and manifests.
    Dataset,
    /// Train the selected pipeline.
    Train,
    /// Write metrics.json for a trained pipeline.
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// FGSM on the test split; writes attack_report.json.
    Attack,
    /// Write mapped images as PGM/PPM.
    ExportImages {
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let g = &cli.global;
    if let Some(n) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let overrides = Overrides {
        pipeline: g.pipeline.clone(),
        epochs: g.epochs,
        seed: g.seed,
        epsilon: g.epsilon,
        out: g.out.clone(),
    };
    let cfg = ExperimentConfig::load(g.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Dataset => commands::dataset(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Eval { split } => commands::eval_cmd(&cfg, &split).map(|_| ()),
        Command::Attack => commands::attack_cmd(&cfg),
        Command::ExportImages { split, count } => commands::export_images(&cfg, &split, count),
    }
}
