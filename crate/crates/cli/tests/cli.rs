//! End-to-end command tests on a miniature synthetic run, both in-process
//! and through the installed binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use tscn_cli::commands::{cmd_embed, cmd_eval, cmd_scatter, cmd_train, EvalOptions};
use tscn_cli::{checkpoint, csv};

fn quick_config(dir: &Path) -> PathBuf {
    let out_dir = dir.join("run");
    let text = format!(
        r#"{{
  "dataset": {{"kind": "synthetic", "seed": 5, "per_class": 40, "side": 8}},
  "arch": {{"conv_channels": [4, 8], "backbone_out": 16, "head_hidden": 24, "pretrain_dim": 12, "embed_dim": 2}},
  "protocol": {{
    "seed": 3,
    "batch_size": 32,
    "pretrain": {{"epochs": 2, "warmup_epochs": 1, "anneal": true}},
    "readout": {{"epochs": 1}},
    "finetune": {{"epochs": 2, "warmup_epochs": 1, "anneal": true}}
  }},
  "out_dir": {out_dir:?}
}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

const QUICK_DATA: &str = "synthetic:seed=5,per_class=40,side=8";

#[test]
fn train_embed_eval_scatter_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    cmd_train(&config).unwrap();

    let run = dir.path().join("run");
    for name in [
        "checkpoint_stage1.tscn",
        "checkpoint_stage2.tscn",
        "checkpoint_stage3.tscn",
        "checkpoint_final.tscn",
        "loss_log.txt",
    ] {
        assert!(run.join(name).exists(), "{name} missing");
    }

    // loss log: one line per configured epoch, "stage epoch loss lr"
    let log = std::fs::read_to_string(run.join("loss_log.txt")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2 + 1 + 2);
    assert!(lines[0].starts_with("1 0 "));
    assert!(lines[4].starts_with("3 1 "));
    for line in &lines {
        assert_eq!(line.split(' ').count(), 4);
    }

    // final checkpoint has the 2-wide readout
    let (params, stage, seed) = checkpoint::load(&run.join("checkpoint_final.tscn")).unwrap();
    assert_eq!(params.readout_dim(), 2);
    assert_eq!(stage, "final");
    assert_eq!(seed, 3);

    // embed: header + one row per image, deterministic across calls
    let csv_path = dir.path().join("embedding.csv");
    cmd_embed(&run.join("checkpoint_final.tscn"), QUICK_DATA, &csv_path).unwrap();
    let (dim, rows) = csv::read_embedding(&csv_path).unwrap();
    assert_eq!(dim, 2);
    assert_eq!(rows.len(), 200);
    let csv_again = dir.path().join("embedding2.csv");
    cmd_embed(&run.join("checkpoint_final.tscn"), QUICK_DATA, &csv_again).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), std::fs::read(&csv_again).unwrap());

    // eval produces all six metric families
    let report_path = dir.path().join("report.txt");
    let options = EvalOptions {
        out: Some(report_path.clone()),
        loss_batch: 16,
        ..EvalOptions::default()
    };
    cmd_eval(&run.join("checkpoint_final.tscn"), QUICK_DATA, &options).unwrap();
    let report = std::fs::read_to_string(&report_path).unwrap();
    for key in [
        "final_loss = ",
        "linear_accuracy = ",
        "ari = ",
        "knn_accuracy.k15 = ",
        "eigenvalue_spectrum = ",
        "class_norms.0 = ",
    ] {
        assert!(report.contains(key), "missing {key} in:\n{report}");
    }

    // scatter: one circle per row
    let svg_path = dir.path().join("plot.svg");
    cmd_scatter(&csv_path, &svg_path).unwrap();
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<circle").count(), 200);
}

#[test]
fn training_twice_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());
    cmd_train(&config).unwrap();
    let first = std::fs::read(dir.path().join("run/checkpoint_final.tscn")).unwrap();
    let first_log = std::fs::read(dir.path().join("run/loss_log.txt")).unwrap();
    cmd_train(&config).unwrap();
    let second = std::fs::read(dir.path().join("run/checkpoint_final.tscn")).unwrap();
    let second_log = std::fs::read(dir.path().join("run/loss_log.txt")).unwrap();
    assert_eq!(first, second);
    assert_eq!(first_log, second_log);
}

#[test]
fn identity_checkpoint_embeds_scaled_pixels() {
    use tscn_core::data::{generate_synthetic, SynthConfig};
    use tscn_core::encoder::{EncoderParams, EncoderSpec, LayerSpec, Shape};
    use tscn_core::numeric::RandomStream;

    // Dense(identity) x3 network: Z is exactly the scaled pixel vector
    let dir = tempfile::tempdir().unwrap();
    let d = 3 * 8 * 8;
    let spec = EncoderSpec::new(
        Shape::new(3, 8, 8),
        vec![
            LayerSpec::Dense { in_units: d, out_units: d },
            LayerSpec::ReLU,
            LayerSpec::Dense { in_units: d, out_units: d },
        ],
    )
    .unwrap();
    let mut rng = RandomStream::new(0, 0);
    let mut params = EncoderParams::<f32>::init(spec, &mut rng);
    for layer in [0, 2] {
        let p = params.layer_mut(layer).unwrap();
        p.w.fill(0.0);
        for i in 0..d {
            p.w[i * d + i] = 1.0;
        }
        p.b.fill(0.0);
    }
    let cp = dir.path().join("identity.tscn");
    checkpoint::save(&cp, &params, "final", 0).unwrap();

    let data = "synthetic:seed=5,per_class=2,side=8";
    let out = dir.path().join("identity.csv");
    cmd_embed(&cp, data, &out).unwrap();
    let (dim, rows) = csv::read_embedding(&out).unwrap();
    assert_eq!(dim, d);
    let ds = generate_synthetic(
        &SynthConfig { per_class: 2, side: 8, ..SynthConfig::default() },
        5,
    )
    .unwrap();
    for (i, row) in rows.iter().enumerate() {
        for (v, &px) in row.z.iter().zip(ds.image(i).data()) {
            let want = px as f32 / 255.0;
            assert_eq!(*v, want as f64, "row {i}");
        }
    }
}

#[test]
fn binary_reports_errors_on_stderr_with_nonzero_exit() {
    let exe = env!("CARGO_BIN_EXE_tscn");
    let dir = tempfile::tempdir().unwrap();

    // missing dataset directory names the path
    let out_dir = dir.path().join("out");
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"dataset": {{"kind": "cifar10", "dir": "/no/such/dir"}},
                "protocol": {{"seed": 1, "pretrain": {{"epochs": 1}}}},
                "out_dir": {out_dir:?}}}"#
        ),
    )
    .unwrap();
    let output = Command::new(exe).args(["train", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("/no/such/dir"), "stderr: {stderr}");

    // config typo is caught with a location
    std::fs::write(&config, r#"{"dataset": {"kind": "synthetic", "seed": 1}, "protocl": {}}"#)
        .unwrap();
    let output = Command::new(exe).args(["train", "--config"]).arg(&config).output().unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("protocl"), "stderr: {stderr}");
}

#[test]
fn binary_runs_the_full_pipeline() {
    let exe = env!("CARGO_BIN_EXE_tscn");
    let dir = tempfile::tempdir().unwrap();
    let config = quick_config(dir.path());

    let status = Command::new(exe).args(["train", "--config"]).arg(&config).status().unwrap();
    assert!(status.success());

    let cp = dir.path().join("run/checkpoint_final.tscn");
    let csv_path = dir.path().join("e.csv");
    let status = Command::new(exe)
        .args(["embed", "--checkpoint"])
        .arg(&cp)
        .args(["--data", QUICK_DATA, "--out"])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());

    let report = dir.path().join("report.txt");
    let status = Command::new(exe)
        .args(["eval", "--checkpoint"])
        .arg(&cp)
        .args(["--data", QUICK_DATA, "--knn-sweep", "--out"])
        .arg(&report)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&report).unwrap();
    // the sweep reports every k in 1..=30
    for k in 1..=30 {
        assert!(text.contains(&format!("knn_accuracy.k{k} = ")), "missing k={k}");
    }

    let svg = dir.path().join("plot.svg");
    let status = Command::new(exe)
        .args(["scatter", "--in"])
        .arg(&csv_path)
        .args(["--out"])
        .arg(&svg)
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn scatter_rejects_non_2d_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.csv");
    std::fs::write(&path, "index,label,split,z1,z2,z3\n0,0,train,1.0,2.0,3.0\n").unwrap();
    let err = cmd_scatter(&path, &dir.path().join("x.svg")).unwrap_err();
    assert!(err.to_string().contains("2D"), "{err}");
}

#[test]
fn scatter_of_header_only_csv_is_a_valid_empty_plot() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "index,label,split,z1,z2\n").unwrap();
    let svg_path = dir.path().join("empty.svg");
    cmd_scatter(&path, &svg_path).unwrap();
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("<circle").count(), 0);
    assert!(svg.contains("</svg>"));
}
