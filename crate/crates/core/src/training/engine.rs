//! The optimization loop shared by pre-training, adaptation and scratch fits.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use super::adam::Adam;
use super::config::TrainConfig;
use super::log::{LogRow, RunLog};
use crate::data::MeasurementRecord;
use crate::diffcore::{LinearOperator, Tape, Tensor};
use crate::encoders::make_grid;
use crate::eval::{metric_pair, psnr};
use crate::models::{save_checkpoint, Model, ModelConfig, ModelKind, SubjectId, ENCODER, SHARED_ENCODER};
use crate::{Error, Result};

/// Extra knobs that do not affect the numerics.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Where to dump the model if the loss diverges.
    pub dump_path: Option<PathBuf>,
}

pub(crate) struct Subject {
    pub id: SubjectId,
    pub label: String,
    pub op: Arc<dyn LinearOperator>,
    pub target: Tensor,
    pub truth: Option<Tensor>,
}

/// Subjects sharing one coordinate grid.
pub(crate) struct Task {
    pub coords: Tensor,
    pub image_shape: Vec<usize>,
    pub subjects: Vec<Subject>,
}

impl Task {
    pub fn new(records: &[&MeasurementRecord], ids: &[SubjectId], cfg: &ModelConfig) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Config("at least one measurement record is required".into()))?;
        let extents = first.operator.spatial_extents();
        if extents.len() != cfg.dims {
            return Err(Error::Config(format!(
                "model expects {}-D coordinates but record {} is {}-D",
                cfg.dims,
                first.id,
                extents.len()
            )));
        }
        let mut subjects = Vec::with_capacity(records.len());
        for (rec, &id) in records.iter().zip(ids) {
            if rec.operator.spatial_extents() != extents {
                return Err(Error::Config(format!("record {} lies on a different grid", rec.id)));
            }
            if rec.operator.channels() != cfg.channels {
                return Err(Error::Config(format!(
                    "record {} has {} image channels, the model {}",
                    rec.id,
                    rec.operator.channels(),
                    cfg.channels
                )));
            }
            let op = rec.operator.build()?;
            if rec.measurement.shape() != op.measurement_shape() {
                return Err(Error::Config(format!(
                    "record {}: measurement {:?} vs operator {:?}",
                    rec.id,
                    rec.measurement.shape(),
                    op.measurement_shape()
                )));
            }
            subjects.push(Subject {
                id,
                label: rec.id.clone(),
                op: op.into_shared(),
                target: rec.measurement.clone(),
                truth: rec.ground_truth.clone(),
            });
        }
        Ok(Self {
            coords: make_grid(&extents)?.coords().clone(),
            image_shape: first.operator.image_shape(),
            subjects,
        })
    }
}

/// Runs `cfg.iterations` Adam updates on the model's unfrozen partitions.
///
/// All subject losses come from one joint forward pass; their sum is
/// differentiated once, so each subject partition receives only its own
/// loss gradient and the shared partitions the gradient of the sum. With
/// `cache_shared` the (frozen) shared encoder is evaluated once up front.
///
pub(crate) struct RunResult {
    pub log: RunLog,
    /// Each subject's image after the final update.
    pub images: Vec<Tensor>,
    /// Each subject's loss before the first update.
    pub initial_losses: Vec<f64>,
}

pub(crate) fn optimize(
    model: &mut Model,
    task: &Task,
    cfg: &TrainConfig,
    cache_shared: bool,
    opts: &RunOptions,
) -> Result<RunResult> {
    cfg.validate()?;
    let shared_name = if model.kind() == ModelKind::NaiveInr { ENCODER } else { SHARED_ENCODER };
    let cached = if cache_shared {
        if !model.params.get(shared_name)?.frozen {
            return Err(Error::Config("only a frozen shared encoder can be cached".into()));
        }
        Some(model.shared_feature_values(&task.coords)?)
    } else {
        None
    };
    let start = Instant::now();
    let mut adam = Adam::new(cfg.adam);
    let mut log = RunLog::new();
    let mut initial_losses = Vec::new();
    for t in 0..=cfg.iterations {
        let mut tape = Tape::new();
        let bound = {
            let m = &*model;
            m.params.bind(&mut tape, |n| {
                !(cached.is_some() && n == shared_name)
                    && task.subjects.iter().any(|s| m.partition_used(n, s.id))
            })
        };
        let shared = match &cached {
            Some(f) => tape.constant(f.clone()),
            None => model.shared_features(&mut tape, &bound, &task.coords)?,
        };
        let mut total = None;
        let mut terms = Vec::with_capacity(task.subjects.len());
        for s in &task.subjects {
            let out = model.forward_with_shared(&mut tape, &bound, s.id, shared, &task.coords)?;
            let img = tape.reshape(out, &task.image_shape)?;
            let pred = tape.apply_operator(s.op.clone(), img)?;
            let target = tape.constant(s.target.clone());
            let loss = tape.l1_loss(pred, target)?;
            total = Some(match total {
                None => loss,
                Some(acc) => tape.add(acc, loss)?,
            });
            terms.push((img, loss));
        }
        let total = total.expect("task has subjects");

        for (s, &(_, loss)) in task.subjects.iter().zip(&terms) {
            let v = tape.value(loss).item() as f64;
            if !v.is_finite() || v > cfg.divergence_threshold {
                if let Some(path) = &opts.dump_path {
                    save_checkpoint(model, path)?;
                    log::error!("loss diverged; model dumped to {}", path.display());
                }
                log::error!("subject {} diverged at iteration {t} with loss {v}", s.label);
                return Err(Error::Diverged { iteration: t, loss: v });
            }
        }
        if t == 0 {
            initial_losses = terms.iter().map(|&(_, l)| tape.value(l).item() as f64).collect();
        }
        if t > 0 && t % cfg.log_interval == 0 {
            let wall_ms = start.elapsed().as_millis() as u64;
            for (s, &(img, loss)) in task.subjects.iter().zip(&terms) {
                let psnr = match &s.truth {
                    Some(gt) => {
                        let (a, b) = metric_pair(tape.value(img), gt)?;
                        Some(psnr(&a, &b, 1.0)?)
                    }
                    None => None,
                };
                log.push(LogRow {
                    iteration: t,
                    subject_id: s.label.clone(),
                    loss: tape.value(loss).item() as f64,
                    psnr,
                    wall_ms,
                })?;
            }
        }
        if t == cfg.iterations {
            let images = terms.iter().map(|&(img, _)| tape.value(img).clone()).collect();
            return Ok(RunResult {
                log,
                images,
                initial_losses,
            });
        }
        let mut grads = tape.backward(total)?;
        let pg = model.params.collect_grads(&bound, &mut grads)?;
        adam.step(&mut model.params, &pg, cfg.lr_at(t))?;
    }
    unreachable!("the loop returns on its final iteration")
}
