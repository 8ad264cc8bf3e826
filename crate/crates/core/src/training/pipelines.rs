use std::collections::BTreeMap;

use super::config::TrainConfig;
use super::engine::{optimize, RunOptions, Task};
use super::log::RunLog;
use crate::data::MeasurementRecord;
use crate::diffcore::Tensor;
use crate::eval::{evaluate, MetricReport, MetricRow};
use crate::models::{subject_partition, Model, ModelConfig, ModelKind, SubjectId};
use crate::{rng, Error, Result};

/// Result of pre-training on a population.
#[derive(Clone, Debug)]
pub struct PretrainOutput {
    /// Shared pair plus one subject partition per record, in record order.
    pub model: Model,
    pub log: RunLog,
    /// Each record's reconstruction after the final update.
    pub images: Vec<Tensor>,
    /// Per-record loss before the first update.
    pub initial_losses: Vec<f64>,
}

/// Jointly fits the shared pair and one subject module per record.
pub fn pretrain(
    records: &[&MeasurementRecord],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<PretrainOutput> {
    if records.is_empty() {
        return Err(Error::Config("pre-training needs at least one record".into()));
    }
    if model_cfg.kind == ModelKind::NaiveInr && records.len() > 1 {
        return Err(Error::Config("the naive INR cannot be pre-trained on several subjects".into()));
    }
    let ids: Vec<SubjectId> = match model_cfg.kind {
        ModelKind::NaiveInr => vec![SubjectId::Test],
        _ => (0..records.len()).map(SubjectId::Index).collect(),
    };
    let task = Task::new(records, &ids, model_cfg)?;
    let mut model = Model::new(model_cfg.clone(), records.len(), rng::sub_seed(cfg.seed, "init"))?;
    model.record_ids = records.iter().map(|r| r.id.clone()).collect();
    let r = optimize(&mut model, &task, cfg, false, opts)?;
    Ok(PretrainOutput {
        model,
        log: r.log,
        images: r.images,
        initial_losses: r.initial_losses,
    })
}

/// How the test-time subject module starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SubjectInit {
    /// Fresh random init (seeded from the training seed).
    #[default]
    Fresh,
    /// A copy of a pre-training subject's module.
    CopyOf(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdaptOptions {
    /// Keep the shared partitions fixed.
    pub freeze_shared: bool,
    pub init: SubjectInit,
}

impl AdaptOptions {
    /// DisINR freezes its shared pair; the shared-encoder baseline fine-tunes everything.
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            freeze_shared: kind == ModelKind::DisInr,
            init: SubjectInit::Fresh,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptOutput {
    /// The input model plus the adapted `test` partition.
    pub model: Model,
    pub image: Tensor,
    pub log: RunLog,
    /// Loss before the first update.
    pub initial_loss: f64,
}

impl AdaptOutput {
    fn from_run(model: Model, mut r: super::engine::RunResult) -> Self {
        Self {
            model,
            image: r.images.remove(0),
            log: r.log,
            initial_loss: r.initial_losses[0],
        }
    }
}

/// Fits a new subject module to one measurement record on top of a
/// pre-trained model.
pub fn adapt(
    record: &MeasurementRecord,
    pretrained: &Model,
    cfg: &TrainConfig,
    opts: &AdaptOptions,
    run: &RunOptions,
) -> Result<AdaptOutput> {
    let kind = pretrained.kind();
    if kind == ModelKind::NaiveInr {
        return Err(Error::Config("the naive INR has no prior to adapt; fit it from scratch".into()));
    }
    let shared = pretrained.shared_partitions();
    for name in &shared {
        pretrained.params.get(name)?;
    }
    let mut model = pretrained.clone();
    match opts.init {
        SubjectInit::Fresh => model.spawn_subject(SubjectId::Test, rng::sub_seed(cfg.seed, "adapt"))?,
        SubjectInit::CopyOf(i) => model.copy_subject(SubjectId::Index(i), SubjectId::Test)?,
    }
    model.params.freeze_all();
    model.params.unfreeze(&[subject_partition(kind, SubjectId::Test)?])?;
    if !opts.freeze_shared {
        model.params.unfreeze(&shared)?;
    }
    let task = Task::new(&[record], &[SubjectId::Test], model.config())?;
    let r = optimize(&mut model, &task, cfg, opts.freeze_shared, run)?;
    Ok(AdaptOutput::from_run(model, r))
}

/// Trains a capacity-matched naive INR on one record from random init.
pub fn fit_scratch(
    record: &MeasurementRecord,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    run: &RunOptions,
) -> Result<AdaptOutput> {
    let naive = model_cfg.with_kind(ModelKind::NaiveInr);
    let mut model = Model::new(naive, 0, rng::sub_seed(cfg.seed, "init"))?;
    model.record_ids = vec![record.id.clone()];
    let task = Task::new(&[record], &[SubjectId::Test], model.config())?;
    let r = optimize(&mut model, &task, cfg, false, run)?;
    Ok(AdaptOutput::from_run(model, r))
}

/// Test-time configurations compared in the freezing ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationMode {
    FreezeAllShared,
    FreezeNone,
    StrainerFreezeEncoder,
    StrainerFull,
}

impl AblationMode {
    pub const ALL: [AblationMode; 4] = [
        AblationMode::FreezeAllShared,
        AblationMode::FreezeNone,
        AblationMode::StrainerFreezeEncoder,
        AblationMode::StrainerFull,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationMode::FreezeAllShared => "disinr_frozen",
            AblationMode::FreezeNone => "disinr_unfrozen",
            AblationMode::StrainerFreezeEncoder => "strainer_frozen_encoder",
            AblationMode::StrainerFull => "strainer_full",
        }
    }

    fn freeze_shared(self) -> bool {
        matches!(self, AblationMode::FreezeAllShared | AblationMode::StrainerFreezeEncoder)
    }
}

pub const NAIVE_LABEL: &str = "naive";

#[derive(Clone, Debug)]
pub struct AblationOutput {
    pub report: MetricReport,
    pub logs: Vec<(String, RunLog)>,
    /// Loss before the first update, keyed by `(method, record id)`.
    pub first_losses: BTreeMap<(String, String), f64>,
}

/// Runs the four freezing configurations (and optionally the naive INR) on
/// the same records with the same training settings.
pub fn run_ablation(
    disinr: &Model,
    strainer: &Model,
    naive: Option<&ModelConfig>,
    records: &[&MeasurementRecord],
    cfg: &TrainConfig,
    split: &str,
) -> Result<AblationOutput> {
    if disinr.kind() != ModelKind::DisInr || strainer.kind() != ModelKind::StrainerLike {
        return Err(Error::Config("ablation needs a DisINR and a shared-encoder model".into()));
    }
    let mut out = AblationOutput {
        report: MetricReport::new(),
        logs: Vec::new(),
        first_losses: BTreeMap::new(),
    };
    let mut record_run = |label: &str, rec: &MeasurementRecord, res: AdaptOutput| -> Result<()> {
        let gt = rec
            .ground_truth
            .as_ref()
            .ok_or_else(|| Error::Config(format!("record {} has no ground truth", rec.id)))?;
        let (p, s) = evaluate(&res.image, gt)?;
        out.report.push(MetricRow {
            method: label.to_string(),
            record_id: rec.id.clone(),
            split: split.to_string(),
            psnr: p,
            ssim: s,
        });
        out.first_losses.insert((label.to_string(), rec.id.clone()), res.initial_loss);
        out.logs.push((label.to_string(), res.log));
        Ok(())
    };
    for mode in AblationMode::ALL {
        let model = match mode {
            AblationMode::FreezeAllShared | AblationMode::FreezeNone => disinr,
            _ => strainer,
        };
        let opts = AdaptOptions {
            freeze_shared: mode.freeze_shared(),
            init: SubjectInit::Fresh,
        };
        for rec in records {
            let res = adapt(rec, model, cfg, &opts, &RunOptions::default())?;
            record_run(mode.label(), rec, res)?;
        }
    }
    if let Some(ncfg) = naive {
        for rec in records {
            let res = fit_scratch(rec, ncfg, cfg, &RunOptions::default())?;
            record_run(NAIVE_LABEL, rec, res)?;
        }
    }
    Ok(out)
}
