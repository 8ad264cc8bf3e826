//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use disinr_core::models::{ModelKind, Preset};
use disinr_core::Result;

use crate::commands::{self, AdaptRequest, Baseline};
use crate::config::{ExperimentConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "disinr", version, about = "Disentangled INR reconstruction for CT, MRI and volume fitting")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory of the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Top-level seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model size preset; overrides the config.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<PresetArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PresetArg {
    Paper,
    Desk,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum KindArg {
    Disinr,
    Strainer,
    Naive,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a phantom family and its measurements.
    Simulate,
    /// Pre-train on the dataset's pre-training records.
    Pretrain {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model kind; overrides the config.
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Only report parameter counts.
        #[arg(long)]
        dry_run: bool,
    },
    /// Adapt a pre-trained model to one record.
    Adapt {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        record: String,
        /// Baselines to run alongside; repeatable.
        #[arg(long, value_enum)]
        baseline: Vec<Baseline>,
        /// Shared-encoder checkpoint for `--baseline strainer`.
        #[arg(long)]
        baseline_checkpoint: Option<PathBuf>,
    },
    /// Freezing ablation over the test records.
    Ablate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        disinr: PathBuf,
        #[arg(long)]
        strainer: PathBuf,
    },
    /// Score saved reconstructions against ground truth.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory holding `<method>/<record>.dinr` files.
        #[arg(long)]
        recon: PathBuf,
    },
    /// Export PCA images of shared and subject features plus an error map.
    Viz {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        record: String,
    },
}

fn load_config(g: &GlobalArgs, kind: Option<KindArg>) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = kind {
        cfg.model.kind = match k {
            KindArg::Disinr => ModelKind::DisInr,
            KindArg::Strainer => ModelKind::StrainerLike,
            KindArg::Naive => ModelKind::NaiveInr,
        };
    }
    cfg.resolve(&Overrides {
        seed: g.seed,
        preset: g.preset.map(|p| match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }),
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let kind = match &cli.command {
        Command::Pretrain { kind, .. } => *kind,
        _ => None,
    };
    let cfg = load_config(g, kind)?;
    let out = |default: PathBuf| g.out.clone().unwrap_or(default);
    let data = |d: &Option<PathBuf>| d.clone().unwrap_or_else(|| cfg.paths.data.clone());
    let runs = &cfg.paths.runs;
    match &cli.command {
        Command::Simulate => {
            let dir = out(cfg.paths.data.clone());
            let s = commands::simulate(&cfg, &dir)?;
            println!("{}", s.describe());
            println!("dataset written to {}", dir.display());
        }
        Command::Pretrain { data: d, dry_run, .. } => {
            let dir = out(runs.join("pretrain"));
            let d = data(d);
            let s = commands::pretrain(&cfg, Some(d.as_path()), &dir, *dry_run)?;
            println!("{}", s.params.describe());
            if let Some(ckpt) = &s.checkpoint {
                println!("mean loss: initial {:.6e}, final {:.6e}", s.initial_loss, s.final_loss);
                println!("checkpoint written to {}", ckpt.display());
            }
        }
        Command::Adapt {
            data: d,
            checkpoint,
            record,
            baseline,
            baseline_checkpoint,
        } => {
            let dir = out(runs.join("adapt").join(record));
            let d = data(d);
            let req = AdaptRequest {
                data: &d,
                record,
                checkpoint: checkpoint.as_deref(),
                baselines: baseline,
                baseline_checkpoint: baseline_checkpoint.as_deref(),
            };
            let s = commands::adapt(&cfg, &req, &dir)?;
            for w in &s.warnings {
                log::warn!("{w}");
                println!("warning: {w}");
            }
            if let Some((trainable, total)) = s.trainable {
                println!("trainable parameters during adaptation: {trainable} of {total}");
            }
            print!("{}", s.report.to_markdown());
            for row in &s.report.rows {
                println!("{},{},{:.4},{:.4}", row.method, row.record_id, row.psnr, row.ssim);
            }
        }
        Command::Ablate {
            data: d,
            disinr,
            strainer,
        } => {
            let dir = out(runs.join("ablate"));
            let report = commands::ablate(&cfg, &data(d), disinr, strainer, &dir)?;
            print!("{}", report.to_markdown());
        }
        Command::Eval { data: d, recon } => {
            let dir = out(runs.join("eval"));
            let report = commands::eval(&data(d), recon, &dir)?;
            cfg.echo(&dir)?;
            print!("{}", report.to_markdown());
        }
        Command::Viz {
            data: d,
            checkpoint,
            record,
        } => {
            let dir = out(runs.join("viz").join(record));
            let s = commands::viz(&data(d), checkpoint, record, &dir)?;
            cfg.echo(&dir)?;
            println!("subject {}: shared variance {:?}, subject variance {:?}", s.subject, s.shared_variance, s.subject_variance);
            for f in &s.files {
                println!("{}", display(f));
            }
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
