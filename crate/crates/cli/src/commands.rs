//! The subcommands. Each one writes its artifacts plus a config echo into
//! an output directory and returns a summary for the caller to print.

use std::fs;
use std::path::{Path, PathBuf};

use disinr_core::data::{
    export_pgm, gen_family, load_image, save_image, simulate_measurements, split, Dataset,
    MeasurementRecord, SplitRole,
};
use disinr_core::diffcore::Tensor;
use disinr_core::encoders::make_grid;
use disinr_core::eval::{
    curve_report, evaluate, metric_pair, pca_features, write_curves_csv, CurveMetric, Image,
    MetricReport, MetricRow,
};
use disinr_core::models::{
    load_checkpoint, save_checkpoint, subject_partition, Architecture, Model, ModelConfig, ModelKind,
    SubjectId,
};
use disinr_core::physics::{fbp_reconstruct, magnitude, realized_acceleration, zero_filled, FourierOperator, OperatorDesc};
use disinr_core::rng::sub_seed;
use disinr_core::training::{
    adapt as adapt_record, fit_scratch, pretrain as pretrain_records, run_ablation, AdaptOptions,
    RunLog, RunOptions, NAIVE_LABEL,
};
use disinr_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const ADAPTED_CHECKPOINT: &str = "adapted.ckpt";
pub const DIVERGED_CHECKPOINT: &str = "diverged.ckpt";
pub const PARAMS: &str = "params.json";
pub const METRICS: &str = "metrics.csv";
pub const RECON_DIR: &str = "recon";

fn file_err(path: &Path, source: std::io::Error) -> Error {
    Error::File {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| file_err(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| file_err(dir, e))
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.join(disinr_core::data::MANIFEST).is_file() {
        return Err(Error::Config(format!("no dataset at {}", dir.display())));
    }
    Dataset::load(dir)
}

fn role_label(role: SplitRole) -> &'static str {
    match role {
        SplitRole::Pretrain => "pretrain",
        SplitRole::TestIn => "test_in",
        SplitRole::TestOut => "test_out",
    }
}

/// Method label of a model adapted at test time.
pub fn method_label(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::DisInr => "disinr",
        ModelKind::StrainerLike => "strainer",
        ModelKind::NaiveInr => NAIVE_LABEL,
    }
}

/// Display image for export: real images as is, complex ones as magnitude.
fn display_image(t: &Tensor) -> Result<Image> {
    if t.ndim() == 3 && t.shape()[2] == 2 {
        Image::from_tensor(&magnitude(t)?)
    } else {
        Image::from_tensor(t)
    }
}

/// Saves `<dir>/<id>.dinr` plus a unit-window PGM preview.
fn write_recon(dir: &Path, id: &str, image: &Tensor) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(format!("{id}.dinr"));
    save_image(image, &path)?;
    let preview = display_image(image)?;
    if preview.shape().len() == 2 {
        export_pgm(&preview, &dir.join(format!("{id}.pgm")), Some((0.0, 1.0)))?;
    }
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    /// Shared modules plus one subject module.
    pub total: usize,
    /// Optimized during test-time adaptation.
    pub trainable_adapt: usize,
    /// Everything optimized during pre-training on `subjects` subjects.
    pub pretrain_total: usize,
    pub subjects: usize,
}

impl ParamCounts {
    pub fn new(cfg: &ModelConfig, subjects: usize) -> Result<Self> {
        let arch = Architecture::new(cfg)?;
        let subject = arch.subject_encoder.as_ref().map_or(0, |e| e.param_count());
        let per_subject = match cfg.kind {
            ModelKind::DisInr => subject,
            ModelKind::StrainerLike => arch.decoder.param_count(),
            ModelKind::NaiveInr => 0,
        };
        let total = arch.model_param_count();
        Ok(Self {
            total,
            trainable_adapt: arch.adapt_param_count(),
            pretrain_total: total + per_subject * subjects.saturating_sub(1),
            subjects,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.trainable_adapt as f64 / self.total as f64
    }

    pub fn describe(&self) -> String {
        format!(
            "parameters: total {} (shared + one subject), trainable during adaptation {} ({:.2}%), \
             pre-training total with {} subjects {}",
            self.total,
            self.trainable_adapt,
            100.0 * self.ratio(),
            self.subjects,
            self.pretrain_total
        )
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        write_text(&dir.join(PARAMS), &(text + "\n"))
    }
}

pub struct SimulateSummary {
    pub records: usize,
    /// Pre-train, in-domain and out-of-domain counts.
    pub split: [usize; 3],
    pub measurement_shape: Vec<usize>,
    pub realized_acceleration: Option<f64>,
}

impl SimulateSummary {
    pub fn describe(&self) -> String {
        let mut s = format!(
            "records: {} (split {}/{}/{}), measurement shape {:?}",
            self.records, self.split[0], self.split[1], self.split[2], self.measurement_shape
        );
        if let Some(af) = self.realized_acceleration {
            s += &format!(", realized acceleration {af:.3}");
        }
        s
    }
}

/// Simulates a phantom family and its measurements into a dataset directory.
pub fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateSummary> {
    let images = gen_family(&cfg.phantom_config())?;
    let desc = cfg.operator_desc()?;
    let records = simulate_measurements(
        &images,
        &desc,
        cfg.operator.noise_sigma,
        sub_seed(cfg.seed, "measurements"),
        "rec",
    )?;
    let s = split(records.len(), cfg.split.fractions, sub_seed(cfg.seed, "split"))?;
    let mut roles = vec![SplitRole::Pretrain; records.len()];
    for &i in &s.test_in {
        roles[i] = SplitRole::TestIn;
    }
    for &i in &s.test_out {
        roles[i] = SplitRole::TestOut;
    }
    let af = match &desc {
        OperatorDesc::FourierMask { mask, .. } => Some(realized_acceleration(mask)),
        _ => None,
    };
    let summary = SimulateSummary {
        records: records.len(),
        split: [s.pretrain.len(), s.test_in.len(), s.test_out.len()],
        measurement_shape: records[0].measurement.shape().to_vec(),
        realized_acceleration: af,
    };
    let info = json!({
        "task": cfg.task,
        "operator": desc.kind(),
        "family": cfg.phantom.family,
        "extents": cfg.phantom.extents,
        "noise_sigma": cfg.operator.noise_sigma,
        "realized_acceleration": af,
    });
    let ds = Dataset {
        records: records.into_iter().zip(roles).collect(),
        info,
    };
    ds.save(out)?;
    cfg.echo(out)?;
    Ok(summary)
}

pub struct PretrainSummary {
    pub params: ParamCounts,
    /// Absent for a dry run.
    pub checkpoint: Option<PathBuf>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Pre-trains on the dataset's pre-training records. A dry run only reports
/// the parameter counts.
pub fn pretrain(
    cfg: &ExperimentConfig,
    data: Option<&Path>,
    out: &Path,
    dry_run: bool,
) -> Result<PretrainSummary> {
    let model_cfg = cfg.model_config()?;
    create_dir(out)?;
    cfg.echo(out)?;
    if dry_run {
        let n = (cfg.phantom.population as f64 * cfg.split.fractions[0]
            / cfg.split.fractions.iter().sum::<f64>())
        .round()
        .max(1.0) as usize;
        let params = ParamCounts::new(&model_cfg, n)?;
        params.save(out)?;
        return Ok(PretrainSummary {
            params,
            checkpoint: None,
            initial_loss: f64::NAN,
            final_loss: f64::NAN,
        });
    }
    let data = data.ok_or_else(|| Error::Config("pre-training needs --data".into()))?;
    let ds = load_dataset(data)?;
    let records = ds.with_role(SplitRole::Pretrain);
    let params = ParamCounts::new(&model_cfg, records.len())?;
    params.save(out)?;
    let run = RunOptions {
        dump_path: Some(out.join(DIVERGED_CHECKPOINT)),
    };
    let res = pretrain_records(&records, &model_cfg, &cfg.pretrain_config(), &run)?;
    let ckpt = out.join(CHECKPOINT);
    save_checkpoint(&res.model, &ckpt)?;
    res.log.save_csv(&out.join("log.csv"))?;
    for (rec, img) in records.iter().zip(&res.images) {
        write_recon(&out.join(RECON_DIR), &rec.id, img)?;
    }
    let n = records.len() as f64;
    Ok(PretrainSummary {
        params,
        checkpoint: Some(ckpt),
        initial_loss: res.initial_losses.iter().sum::<f64>() / n,
        final_loss: final_mean_loss(&res.log),
    })
}

fn final_mean_loss(log: &RunLog) -> f64 {
    let Some(last) = log.rows().last().map(|r| r.iteration) else {
        return f64::NAN;
    };
    let rows: Vec<f64> = log.rows().iter().filter(|r| r.iteration == last).map(|r| r.loss).collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    /// Capacity-matched INR trained from scratch.
    Naive,
    /// Shared-encoder model adapted from `--baseline-checkpoint`.
    Strainer,
    /// Filtered backprojection (CT only).
    Fbp,
    /// Zero-filled inverse Fourier transform (MRI only).
    Zf,
}

impl Baseline {
    pub fn label(self) -> &'static str {
        match self {
            Baseline::Naive => NAIVE_LABEL,
            Baseline::Strainer => "strainer",
            Baseline::Fbp => "fbp",
            Baseline::Zf => "zf",
        }
    }
}

pub struct AdaptRequest<'a> {
    pub data: &'a Path,
    pub record: &'a str,
    pub checkpoint: Option<&'a Path>,
    pub baselines: &'a [Baseline],
    pub baseline_checkpoint: Option<&'a Path>,
}

pub struct AdaptSummary {
    pub report: MetricReport,
    /// Trainable and total parameter counts of the adapted model.
    pub trainable: Option<(usize, usize)>,
    pub warnings: Vec<String>,
}

fn push_metrics(
    report: &mut MetricReport,
    method: &str,
    rec: &MeasurementRecord,
    split: &str,
    image: &Tensor,
) -> Result<()> {
    if let Some(gt) = &rec.ground_truth {
        let (psnr, ssim) = evaluate(image, gt)?;
        report.push(MetricRow {
            method: method.to_string(),
            record_id: rec.id.clone(),
            split: split.to_string(),
            psnr,
            ssim,
        });
    }
    Ok(())
}

fn adapted_run(
    rec: &MeasurementRecord,
    model: &Model,
    cfg: &ExperimentConfig,
    out: &Path,
    label: &str,
) -> Result<(Tensor, Model)> {
    let run = RunOptions {
        dump_path: Some(out.join(DIVERGED_CHECKPOINT)),
    };
    let res = adapt_record(rec, model, &cfg.adapt_config(), &AdaptOptions::for_kind(model.kind()), &run)?;
    res.log.save_csv(&out.join(format!("curve_{label}.csv")))?;
    Ok((res.image, res.model))
}

/// Test-time adaptation of one record, optionally alongside baselines.
pub fn adapt(cfg: &ExperimentConfig, req: &AdaptRequest, out: &Path) -> Result<AdaptSummary> {
    if req.checkpoint.is_none() && req.baselines.is_empty() {
        return Err(Error::Config("adapt needs --checkpoint or at least one --baseline".into()));
    }
    let ds = load_dataset(req.data)?;
    let rec = ds.get(req.record)?;
    let role = ds.role(req.record).expect("record exists");
    let mut warnings = Vec::new();
    if role == SplitRole::Pretrain {
        warnings.push(format!("record {} belongs to the pre-training split", rec.id));
    }
    create_dir(out)?;
    cfg.echo(out)?;
    let split = role_label(role);
    let recon = out.join(RECON_DIR);
    let mut report = MetricReport::new();
    let mut trainable = None;
    let mut model_cfg = cfg.model_config()?;

    if let Some(path) = req.checkpoint {
        let model = load_checkpoint(path, None)?;
        if model.kind() == ModelKind::NaiveInr {
            return Err(Error::Config("a naive INR checkpoint has no prior to adapt".into()));
        }
        if model.record_ids.iter().any(|id| id == &rec.id) {
            warnings.push(format!("record {} was seen during pre-training", rec.id));
        }
        model_cfg = model.config().clone();
        let label = method_label(model.kind());
        let (image, adapted) = adapted_run(rec, &model, cfg, out, label)?;
        let count = |frozen: bool| {
            adapted
                .params
                .partitions()
                .iter()
                .filter(|p| frozen || !p.frozen)
                .map(|p| p.param_count())
                .sum::<usize>()
        };
        trainable = Some((count(false), count(true)));
        save_checkpoint(&adapted, &out.join(ADAPTED_CHECKPOINT))?;
        write_recon(&recon.join(label), &rec.id, &image)?;
        push_metrics(&mut report, label, rec, split, &image)?;
    }

    for &b in req.baselines {
        let image = match b {
            Baseline::Naive => {
                let run = RunOptions {
                    dump_path: Some(out.join(DIVERGED_CHECKPOINT)),
                };
                let res = fit_scratch(rec, &model_cfg, &cfg.adapt_config(), &run)?;
                res.log.save_csv(&out.join(format!("curve_{}.csv", b.label())))?;
                res.image
            }
            Baseline::Strainer => {
                let path = req
                    .baseline_checkpoint
                    .ok_or_else(|| Error::Config("--baseline strainer needs --baseline-checkpoint".into()))?;
                let model = load_checkpoint(path, None)?;
                if model.kind() != ModelKind::StrainerLike {
                    return Err(Error::Config(format!(
                        "{} is not a shared-encoder checkpoint",
                        path.display()
                    )));
                }
                adapted_run(rec, &model, cfg, out, b.label())?.0
            }
            Baseline::Fbp => match &rec.operator {
                OperatorDesc::FanBeam(g) => fbp_reconstruct(g, &rec.measurement)?,
                _ => return Err(Error::Config("FBP needs a fan-beam record".into())),
            },
            Baseline::Zf => match &rec.operator {
                OperatorDesc::FourierMask { mask, coil_maps } => {
                    let op = FourierOperator::new(mask.clone(), coil_maps.clone())?;
                    zero_filled(&op, &rec.measurement)?
                }
                _ => return Err(Error::Config("zero-filling needs an MRI record".into())),
            },
        };
        write_recon(&recon.join(b.label()), &rec.id, &image)?;
        push_metrics(&mut report, b.label(), rec, split, &image)?;
    }
    report.save_csv(&out.join(METRICS))?;
    Ok(AdaptSummary {
        report,
        trainable,
        warnings,
    })
}

/// Freezing ablation over every test record of the dataset.
pub fn ablate(
    cfg: &ExperimentConfig,
    data: &Path,
    disinr: &Path,
    strainer: &Path,
    out: &Path,
) -> Result<MetricReport> {
    let ds = load_dataset(data)?;
    let disinr = load_checkpoint(disinr, None)?;
    let strainer = load_checkpoint(strainer, None)?;
    create_dir(out)?;
    cfg.echo(out)?;
    let mut report = MetricReport::new();
    let mut logs = Vec::new();
    for role in [SplitRole::TestIn, SplitRole::TestOut] {
        let records = ds.with_role(role);
        if records.is_empty() {
            continue;
        }
        let res = run_ablation(
            &disinr,
            &strainer,
            Some(disinr.config()),
            &records,
            &cfg.adapt_config(),
            role_label(role),
        )?;
        for row in res.report.rows {
            report.push(row);
        }
        logs.extend(res.logs);
    }
    if report.rows.is_empty() {
        return Err(Error::Config("the dataset has no test records".into()));
    }
    report.save_csv(&out.join("ablation.csv"))?;
    write_text(&out.join("ablation.md"), &report.to_markdown())?;
    let curves = curve_report(&logs, CurveMetric::Psnr);
    let path = out.join("curves.csv");
    let mut f = fs::File::create(&path).map_err(|e| file_err(&path, e))?;
    write_curves_csv(&curves, &mut f)?;
    Ok(report)
}

/// Scores every `<recon>/<method>/<id>.dinr` against the dataset's ground truth.
pub fn eval(data: &Path, recon: &Path, out: &Path) -> Result<MetricReport> {
    let ds = load_dataset(data)?;
    let mut methods: Vec<PathBuf> = fs::read_dir(recon)
        .map_err(|e| file_err(recon, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    methods.sort();
    let mut report = MetricReport::new();
    for dir in methods {
        let method = dir.file_name().unwrap().to_string_lossy().into_owned();
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| file_err(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "dinr"))
            .collect();
        files.sort();
        for file in files {
            let id = file.file_stem().unwrap().to_string_lossy().into_owned();
            let rec = ds.get(&id)?;
            let split = role_label(ds.role(&id).expect("record exists"));
            push_metrics(&mut report, &method, rec, split, &load_image(&file)?)?;
        }
    }
    if report.rows.is_empty() {
        return Err(Error::Config(format!("no reconstructions under {}", recon.display())));
    }
    create_dir(out)?;
    report.save_csv(&out.join(METRICS))?;
    write_text(&out.join("summary.md"), &report.to_markdown())?;
    Ok(report)
}

pub struct VizSummary {
    pub subject: SubjectId,
    pub shared_variance: Vec<f64>,
    pub subject_variance: Vec<f64>,
    pub files: Vec<PathBuf>,
}

/// Number of principal components exported per feature set.
pub const VIZ_COMPONENTS: usize = 3;

/// Exports the leading principal components of the shared and the subject
/// features over the image grid, and the reconstruction error map.
pub fn viz(data: &Path, checkpoint: &Path, record: &str, out: &Path) -> Result<VizSummary> {
    let ds = load_dataset(data)?;
    let rec = ds.get(record)?;
    let model = load_checkpoint(checkpoint, None)?;
    if model.kind() != ModelKind::DisInr {
        return Err(Error::Config("feature visualization needs a DisINR checkpoint".into()));
    }
    let subject = match model.record_ids.iter().position(|id| id == record) {
        Some(i) => SubjectId::Index(i),
        None if model.params.contains(&subject_partition(model.kind(), SubjectId::Test)?) => {
            SubjectId::Test
        }
        None => {
            return Err(Error::Lookup(format!(
                "record {record} is neither a pre-training subject nor an adapted one"
            )))
        }
    };
    let extents = rec.operator.spatial_extents();
    if extents.len() != 2 {
        return Err(Error::Config("feature visualization supports 2-D records".into()));
    }
    let coords = make_grid(&extents)?.coords().clone();
    create_dir(out)?;
    let mut files = Vec::new();
    let mut export = |name: &str, values: Vec<f64>, window: Option<(f64, f64)>| -> Result<()> {
        let img = Image::new(extents.clone(), values)?;
        let path = out.join(format!("{name}.pgm"));
        export_pgm(&img, &path, window)?;
        files.push(path);
        Ok(())
    };
    let mut variances = Vec::new();
    for (prefix, feats) in [
        ("shared", model.shared_feature_values(&coords)?),
        ("subject", model.subject_feature_values(subject, &coords)?),
    ] {
        let pca = pca_features(&feats, VIZ_COMPONENTS)?;
        let k = pca.components.shape()[1];
        for c in 0..k {
            let values = (0..coords.shape()[0])
                .map(|r| pca.components.data()[r * k + c] as f64)
                .collect();
            export(&format!("{prefix}_pc{}", c + 1), values, None)?;
        }
        variances.push(pca.explained_variance_ratio.clone());
    }
    let image = model.render(subject, &coords)?;
    let image = image.reshape(&rec.operator.image_shape())?;
    let gt = rec
        .ground_truth
        .as_ref()
        .ok_or_else(|| Error::Config(format!("record {record} has no ground truth")))?;
    let (a, b) = metric_pair(&image, gt)?;
    let err: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).collect();
    export("error", err, Some((0.0, 1.0)))?;
    Ok(VizSummary {
        subject,
        subject_variance: variances.pop().unwrap(),
        shared_variance: variances.pop().unwrap(),
        files,
    })
}
