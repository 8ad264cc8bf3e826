use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use disinr_cli::config::{ExperimentConfig, Overrides, CONFIG_ECHO};
use disinr_core::data::Dataset;
use disinr_core::diffcore::LinearOperator;
use disinr_core::encoders::make_grid;
use disinr_core::models::{load_checkpoint, SubjectId};
use disinr_core::physics::{fourier_adjoint, FourierOperator, OperatorDesc};
use disinr_core::training::RunLog;

const SMALL: &str = r#"
task = "volume_fit"
seed = 3

[model]
encoder_width = 32
feature_dim = 16
decoder_width = 32

[model.hash]
levels = 4
table_size = 1024
features_per_entry = 2
base_resolution = 2
per_level_scale = 2.0

[phantom]
extents = [24, 24]
population = 5

[train]
iterations = 20
log_interval = 5

[adapt]
iterations = 20
log_interval = 5
"#;

fn disinr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disinr"))
        .args(args)
        .env("DISINR_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = disinr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates the small identity dataset and pre-trains on it.
fn small_pipeline(root: &Path, extra: &str) -> (PathBuf, PathBuf, PathBuf) {
    let cfg = write_config(root, "small.toml", &format!("{SMALL}{extra}"));
    let data = root.join("data");
    let run = root.join("pre");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    ok(&["pretrain", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]);
    (cfg, data, run)
}

#[test]
fn default_simulation_is_ten_records_split_six_two_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let stdout = ok(&["simulate", "--out", s(&a)]);
    assert!(stdout.contains("records: 10 (split 6/2/2)"), "{stdout}");
    let ds = Dataset::load(&a).unwrap();
    assert_eq!(ds.records.len(), 10);
    // rerun is bitwise identical
    let b = dir.path().join("b");
    ok(&["simulate", "--out", s(&b)]);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 12);
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn mri_simulation_reports_realized_acceleration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mri.toml", "task = \"mri\"\n[phantom]\nextents = [128, 128]\npopulation = 2\n");
    let stdout = ok(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("d"))]);
    let af: f64 = stdout
        .split("realized acceleration ")
        .nth(1)
        .and_then(|t| t.lines().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((af - 6.0).abs() <= 0.15 * 6.0, "{af}");
    // oracle: count sampled rows directly
    let ds = Dataset::load(&dir.path().join("d")).unwrap();
    let OperatorDesc::FourierMask { mask, .. } = &ds.records[0].0.operator else {
        panic!("not an MRI record");
    };
    let rows = (0..128).filter(|r| mask.data()[r * 128] != 0.0).count();
    assert!((128.0 / rows as f64 - af).abs() < 1e-3);
}

#[test]
fn strict_config_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "task = \"ct\"\nsede = 1\n");
    let out = disinr(&["simulate", "--config", s(&bad), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
    let out = disinr(&["pretrain", "--data", s(&dir.path().join("nothing")), "--out", s(&dir.path().join("y"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_disinr"))
        .args(["simulate", "--out", s(&dir.path().join("z"))])
        .env("DISINR_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(disinr(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn config_echo_parses_back_equal() {
    let cfg = ExperimentConfig::from_toml(SMALL)
        .unwrap()
        .resolve(&Overrides {
            seed: Some(17),
            preset: None,
        })
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    cfg.echo(dir.path()).unwrap();
    let back = ExperimentConfig::load(&dir.path().join(CONFIG_ECHO)).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.seed, 17);
    let default = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_toml(&default.to_toml().unwrap()).unwrap(), default);
}

#[test]
fn pretrain_single_subject_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "\n[split]\nfractions = [1.0, 0.0, 0.0]\n";
    let cfg = write_config(dir.path(), "one.toml", &format!("{SMALL}{extra}").replace("population = 5", "population = 1"));
    let data = dir.path().join("data");
    let run = dir.path().join("pre");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    let stdout = ok(&["pretrain", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]);
    let losses: Vec<f64> = stdout
        .lines()
        .find(|l| l.starts_with("mean loss"))
        .unwrap()
        .split([' ', ','])
        .filter_map(|w| w.parse().ok())
        .collect();
    assert_eq!(losses.len(), 2, "{stdout}");
    assert!(losses[1] < losses[0]);

    let log = RunLog::load_csv(&run.join("log.csv")).unwrap();
    assert_eq!(log.len(), 20 / 5);
    assert!(run.join(CONFIG_ECHO).is_file());

    // Reloaded checkpoint reproduces the final logged loss.
    let model = load_checkpoint(&run.join("checkpoint.ckpt"), None).unwrap();
    let ds = Dataset::load(&data).unwrap();
    let rec = &ds.records[0].0;
    let coords = make_grid(&[24, 24]).unwrap().coords().clone();
    let x = model.render(SubjectId::Index(0), &coords).unwrap().reshape(&[24, 24]).unwrap();
    let op = rec.operator.build().unwrap();
    let ax = op.apply(&x).unwrap();
    let loss = ax
        .data()
        .iter()
        .zip(rec.measurement.data())
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum::<f64>()
        / ax.numel() as f64;
    let logged = log.rows().last().unwrap().loss;
    assert!((loss - logged).abs() < 1e-6, "{loss} vs {logged}");
}

#[test]
fn adapt_keeps_shared_partitions_and_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data, run) = small_pipeline(dir.path(), "");
    let ds = Dataset::load(&data).unwrap();
    let test_id = ds.with_role(disinr_core::data::SplitRole::TestIn)[0].id.clone();
    let out = dir.path().join("adapt");
    let ckpt = run.join("checkpoint.ckpt");
    let stdout = ok(&[
        "adapt", "--config", s(&cfg), "--data", s(&data), "--checkpoint", s(&ckpt), "--record", &test_id,
        "--baseline", "naive", "--out", s(&out),
    ]);
    assert!(stdout.contains(&format!("disinr,{test_id},")), "{stdout}");
    assert!(stdout.contains(&format!("naive,{test_id},")));
    assert!(!stdout.contains("warning"));
    let before = load_checkpoint(&ckpt, None).unwrap();
    let after = load_checkpoint(&out.join("adapted.ckpt"), None).unwrap();
    for name in before.shared_partitions() {
        assert_eq!(before.params.get(name).unwrap().tensors, after.params.get(name).unwrap().tensors);
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(out.join("recon/disinr").join(format!("{test_id}.dinr")).is_file());

    // eval rescoring matches the adapt metrics
    let eval_out = dir.path().join("eval");
    ok(&["eval", "--data", s(&data), "--recon", s(&out.join("recon")), "--out", s(&eval_out)]);
    let rescored = std::fs::read_to_string(eval_out.join("metrics.csv")).unwrap();
    let mut a: Vec<&str> = metrics.lines().collect();
    let mut b: Vec<&str> = rescored.lines().collect();
    a.sort_unstable();
    b.sort_unstable();
    assert_eq!(a, b);

    // pre-training records are allowed but flagged
    let pre_id = ds.with_role(disinr_core::data::SplitRole::Pretrain)[0].id.clone();
    let stdout = ok(&[
        "adapt", "--config", s(&cfg), "--data", s(&data), "--checkpoint", s(&ckpt), "--record", &pre_id,
        "--out", s(&dir.path().join("adapt_pre")),
    ]);
    assert!(stdout.contains("warning"));
}

#[test]
fn zero_filled_baseline_equals_adjoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "mri.toml",
        "task = \"mri\"\n[phantom]\nextents = [32, 32]\npopulation = 3\n[operator]\ncoils = 4\n",
    );
    let data = dir.path().join("d");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    let ds = Dataset::load(&data).unwrap();
    let rec = &ds.records[2].0;
    let out = dir.path().join("zf");
    ok(&["adapt", "--config", s(&cfg), "--data", s(&data), "--record", &rec.id, "--baseline", "zf", "--out", s(&out)]);
    let zf = disinr_core::data::load_image(&out.join("recon/zf").join(format!("{}.dinr", rec.id))).unwrap();
    let OperatorDesc::FourierMask { mask, coil_maps } = &rec.operator else {
        panic!("not an MRI record");
    };
    let op = FourierOperator::new(mask.clone(), coil_maps.clone()).unwrap();
    assert_eq!(zf, fourier_adjoint(&op, &rec.measurement).unwrap());
    // FBP on an MRI record is an input error
    let out = disinr(&["adapt", "--config", s(&cfg), "--data", s(&data), "--record", &rec.id, "--baseline", "fbp", "--out", s(&dir.path().join("f"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "div.toml", &SMALL.replace("iterations = 20\nlog_interval = 5\n\n[adapt]", "iterations = 20\nlog_interval = 5\ndivergence_threshold = 1e-12\n\n[adapt]"));
    let data = dir.path().join("data");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&data)]);
    let run = dir.path().join("pre");
    let out = disinr(&["pretrain", "--config", s(&cfg), "--data", s(&data), "--out", s(&run)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("diverged.ckpt").is_file());
}

#[test]
fn ablation_table_has_every_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, data, run) = small_pipeline(dir.path(), "");
    let strainer = dir.path().join("strainer");
    ok(&["pretrain", "--config", s(&cfg), "--data", s(&data), "--kind", "strainer", "--out", s(&strainer)]);
    let table = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "ablate", "--config", s(&cfg), "--data", s(&data), "--disinr", s(&run.join("checkpoint.ckpt")),
            "--strainer", s(&strainer.join("checkpoint.ckpt")), "--out", s(&out),
        ]);
        std::fs::read_to_string(out.join("ablation.csv")).unwrap()
    };
    let csv = table("ab1");
    for method in ["disinr_frozen", "disinr_unfrozen", "strainer_frozen_encoder", "strainer_full", "naive"] {
        // one in-domain and one out-of-domain record each
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("{method},"))).count(), 2, "{csv}");
    }
    for line in csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert!(cols[2].parse::<f64>().unwrap().is_finite() && cols[3].parse::<f64>().unwrap().is_finite());
    }
    assert_eq!(table("ab2"), csv);
    assert!(dir.path().join("ab1/ablation.md").is_file());
}

#[test]
fn viz_exports_components_and_error_map() {
    let dir = tempfile::tempdir().unwrap();
    let (_, data, run) = small_pipeline(dir.path(), "");
    let model = load_checkpoint(&run.join("checkpoint.ckpt"), None).unwrap();
    let ckpt = run.join("checkpoint.ckpt");
    let mut outs = Vec::new();
    for id in &model.record_ids[..2] {
        let out = dir.path().join(format!("viz_{id}"));
        ok(&["viz", "--data", s(&data), "--checkpoint", s(&ckpt), "--record", id, "--out", s(&out)]);
        let mut pgms: Vec<String> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".pgm"))
            .collect();
        pgms.sort();
        assert_eq!(
            pgms,
            ["error.pgm", "shared_pc1.pgm", "shared_pc2.pgm", "shared_pc3.pgm", "subject_pc1.pgm", "subject_pc2.pgm", "subject_pc3.pgm"]
        );
        outs.push(out);
    }
    for k in 1..=3 {
        let read = |o: &PathBuf, n: &str| std::fs::read(o.join(format!("{n}_pc{k}.pgm"))).unwrap();
        assert_eq!(read(&outs[0], "shared"), read(&outs[1], "shared"));
    }
    let out = disinr(&["viz", "--data", s(&data), "--checkpoint", s(&ckpt), "--record", "nope", "--out", s(&dir.path().join("v"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dry_run_reports_paper_parameter_counts() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["pretrain", "--preset", "paper", "--dry-run", "--out", s(dir.path())]);
    assert!(stdout.contains("trainable during adaptation"), "{stdout}");
    let params: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("params.json")).unwrap()).unwrap();
    let (total, trainable) = (params["total"].as_u64().unwrap(), params["trainable_adapt"].as_u64().unwrap());
    assert!((trainable as f64) < 0.55 * total as f64);
    assert!(!dir.path().join("checkpoint.ckpt").exists());
}
