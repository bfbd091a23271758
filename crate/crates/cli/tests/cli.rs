use std::path::Path;
use std::process::{Command, Output};

use agrpose::eval::{read_csv, MetricsReport};
use agrpose::train::read_losses_csv;

fn agrpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agrpose"))
        .args(args)
        .args(["--log-level", "warn"])
        .output()
        .expect("agrpose binary runs")
}

fn success(args: &[&str]) -> Output {
    let out = agrpose(args);
    assert!(
        out.status.success(),
        "agrpose {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: [&str; 3] = ["--synth.count=4", "--train.batch=2", "--eval.test_count=3"];

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = agrpose(&["synth", "--out", p(&data), "--train.learning_rate=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.learning_rate"));
    assert_eq!(agrpose(&["synth", "--out", p(&data), "--profile", "huge"]).status.code(), Some(2));
    assert_eq!(agrpose(&["ablate", "--protocol", "nope", "--out", p(&data)]).status.code(), Some(2));
    let missing = dir.path().join("missing");
    assert_eq!(agrpose(&["train", "--data", p(&missing), "--run", p(&dir.path().join("r"))]).status.code(), Some(3));
    assert_eq!(
        agrpose(&["gradcheck", "--corrupt-backward", "layer.relu"]).status.code(),
        Some(4)
    );
}

#[test]
fn synth_train_resume_eval() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train"), dir.path().join("test"));
    let mut args = vec!["synth", "--out", p(&train)];
    args.extend(SMALL);
    success(&args);
    let mut args = vec!["synth", "--split", "test", "--out", p(&test)];
    args.extend(SMALL);
    success(&args);

    let full = dir.path().join("full");
    let mut args = vec!["train", "--data", p(&train), "--run", p(&full), "--train.epochs=2"];
    args.extend(SMALL);
    success(&args);
    for f in ["config.json", "manifest.json", "checkpoints/epoch_000/index.json", "checkpoints/epoch_002/index.json", "reports/losses.csv"] {
        assert!(full.join(f).exists(), "missing {f}");
    }

    let part = dir.path().join("part");
    let mut args = vec!["train", "--data", p(&train), "--run", p(&part), "--train.epochs=1"];
    args.extend(SMALL);
    success(&args);
    success(&["train", "--data", p(&train), "--run", p(&part), "--resume", "--train.epochs=2"]);
    assert_eq!(
        read_losses_csv(&part.join("reports/losses.csv")).unwrap(),
        read_losses_csv(&full.join("reports/losses.csv")).unwrap()
    );

    let out = success(&["eval", "--run", p(&full), "--data", p(&test), "--tag", "held_out"]);
    let printed: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    let stored: MetricsReport = serde_json::from_str(&std::fs::read_to_string(full.join("reports/metrics.json")).unwrap()).unwrap();
    assert_eq!(printed, stored);
    let rows = read_csv(&full.join("reports/metrics.csv")).unwrap();
    assert!(rows.iter().all(|r| r.cell_id == "epoch_002" && r.test_tag == "held_out"));

    let out = success(&["eval", "--run", p(&full), "--data", p(&test), "--gt-oracle"]);
    let oracle: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(oracle.mrpe, Some(0.0));
    assert_eq!(oracle.pck_abs, Some(100.0));

    let other = dir.path().join("other");
    let mut args = vec!["synth", "--out", p(&other), "--synth.image_w=60"];
    args.extend(SMALL);
    success(&args);
    let out = agrpose(&["train", "--data", p(&other), "--run", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn projection_ablation_writes_two_cells() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let printed = success(&[
        "ablate",
        "--protocol",
        "projection",
        "--out",
        p(&out),
        "--ablate.train_count=2",
        "--ablate.test_count=2",
        "--ablate.epochs=1",
    ]);
    assert_eq!(String::from_utf8_lossy(&printed.stdout).lines().count(), 2);
    let rows = read_csv(&out.join("projection.csv")).unwrap();
    let mut cells: Vec<&str> = rows.iter().map(|r| r.cell_id.as_str()).collect();
    cells.dedup();
    assert_eq!(cells, ["gated", "naive"]);
    assert!(out.join("config.json").exists());
    assert!(out.join("projection/gated/checkpoints/epoch_001/index.json").exists());
}
