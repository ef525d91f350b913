use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ensemble-dr"));
    c.env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, n: usize) -> (PathBuf, PathBuf) {
    let o = run(&["synth", "--output-dir", s(dir), "--n-images", &n.to_string(), "--size", "32", "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    (dir.join("labels.csv"), dir.join("images"))
}

fn reference_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).unwrap();
    let mut csv = String::from("id_code,diagnosis\n");
    for (label, n) in [1805, 1624, 999, 834, 772].into_iter().enumerate() {
        for i in 0..n {
            let id = format!("img{label}_{i:04}");
            std::fs::write(images.join(format!("{id}.png")), b"").unwrap();
            csv.push_str(&format!("{id},{label}\n"));
        }
    }
    let labels = dir.join("labels.csv");
    std::fs::write(&labels, csv).unwrap();
    (labels, images)
}

fn total_row(out: &str, column: usize) -> usize {
    let line = out.lines().find(|l| l.starts_with("total")).expect("total row");
    line.split_whitespace().nth(column).unwrap().parse().unwrap()
}

#[test]
fn prepare_reference_counts() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = reference_dataset(dir.path());
    let out = dir.path().join("m.json");
    let o = run(&[
        "prepare", "--labels-file", s(&labels), "--image-dir", s(&images), "--val-fraction", "0", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(total_row(&text, 1), 6034);
    assert_eq!(total_row(&text, 4), 1207);
    assert!(out.exists());

    let o = run(&["prepare", "--labels-file", s(&labels), "--image-dir", s(&images), "--test-fraction", "0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(total_row(&stdout(&o), 4), 0);
}

#[test]
fn malformed_csv_exits_2_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "id_code,diagnosis\na,0\nb\n").unwrap();
    std::fs::write(dir.path().join("a.png"), b"").unwrap();
    let o = run(&["prepare", "--labels-file", s(&labels), "--image-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"ensemble": {"backbone": ["tiny_a"]}}"#).unwrap();
    let o = run(&["prepare", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`backbone`"), "{}", stderr(&o));
}

#[test]
fn missing_pretrained_weights_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = synth(&dir.path().join("data"), 25);
    let o = bin()
        .env("ENSEMBLE_DR_WEIGHTS_DIR", dir.path().join("no-weights"))
        .args(["train", "--labels-file", s(&labels), "--image-dir", s(&images), "--epochs", "1"])
        .args(["--output-dir", s(&dir.path().join("out"))])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("vgg16"), "{}", stderr(&o));
}

fn train_tiny(labels: &Path, images: &Path, out: &Path) -> Output {
    run(&[
        "train", "--labels-file", s(labels), "--image-dir", s(images), "--epochs", "1", "--backbones", "tiny_a,tiny_b",
        "--seed", "5", "--output-dir", s(out),
    ])
}

#[test]
fn train_evaluate_predict_plot() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = synth(&dir.path().join("data"), 30);

    let started = std::time::Instant::now();
    let a = dir.path().join("a");
    let o = train_tiny(&labels, &images, &a);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(started.elapsed().as_secs() < 60);
    for f in ["checkpoint.ckpt", "history.json", "history.csv", "metrics.json", "confusion.csv", "manifest.json"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    for f in ["accuracy_curve.png", "loss_curve.png", "confusion_matrix.png"] {
        image::open(a.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
    }

    let b = dir.path().join("b");
    assert!(train_tiny(&labels, &images, &b).status.success());
    for f in ["history.json", "metrics.json", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs between reruns");
    }

    let ckpt = a.join("checkpoint.ckpt");
    let manifest = a.join("manifest.json");
    let eval_dir = dir.path().join("eval");
    let o = run(&["evaluate", "--checkpoint", s(&ckpt), "--manifest", s(&manifest), "--output-dir", s(&eval_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: ensemble_dr::MetricsReport =
        serde_json::from_slice(&std::fs::read(eval_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report.total, 6);
    assert_eq!(std::fs::read(eval_dir.join("metrics.json")).unwrap(), std::fs::read(a.join("metrics.json")).unwrap());

    // The synthetic set is too small for a validation carve-out of 0.
    let o = run(&[
        "evaluate", "--checkpoint", s(&ckpt), "--labels-file", s(&labels), "--image-dir", s(&images), "--val-fraction", "0",
        "--split", "val", "--output-dir", s(&eval_dir),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let img0 = images.join("syn_00.png");
    let img1 = images.join("syn_01.png");
    let missing = dir.path().join("missing.png");
    let o = run(&["predict", "--checkpoint", s(&ckpt), s(&img0), s(&missing), s(&img1)]);
    assert_eq!(o.status.code(), Some(2));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1]["error"].is_string());
    for (line, path) in [(&lines[0], &img0), (&lines[2], &img1)] {
        assert_eq!(line["path"], s(path));
        let probs: Vec<f64> = line["probs"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(probs.len(), 5);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        let k = line["class_index"].as_u64().unwrap() as usize;
        assert_eq!(line["class"], ensemble_dr::DEFAULT_CLASS_NAMES[k]);
    }
    let o = run(&["predict", "--checkpoint", s(&ckpt), s(&img0)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);

    let plots = dir.path().join("plots");
    let o = run(&["plot", "--history", s(&a.join("history.json")), "--metrics", s(&a.join("metrics.json")), "--output-dir", s(&plots)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn compare_writes_three_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = synth(&dir.path().join("data"), 25);
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{
            "dataset": {"labels_file": "data/labels.csv", "image_dir": "data/images", "val_fraction": 0},
            "ensemble": {"backbone_names": ["tiny_a", "tiny_b"], "pretrained": false},
            "train": {"max_epochs": 1},
            "experiment": {"n_runs": 2, "base_seed": 4},
            "output_dir": "cmp"
        }"#,
    )
    .unwrap();
    let _ = (labels, images);
    let o = run(&["compare", "--config", s(&cfg), "--no-checkpoints", "--parallel", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("cmp/comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "model_name,mean_accuracy_pct,std_accuracy_pct");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["tiny_a", "tiny_b", "Ensemble"]);
    for l in &lines[1..] {
        let acc: f64 = l.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=100.0).contains(&acc));
    }
    assert!(dir.path().join("cmp/tiny_a/aggregate.json").exists());
    assert!(dir.path().join("cmp/Ensemble/runs/1/metrics.json").exists());
}

#[test]
fn checkpoint_fits_its_own_train_split() {
    let dir = tempfile::tempdir().unwrap();
    let (labels, images) = synth(&dir.path().join("data"), 100);
    let out = dir.path().join("run");
    let o = run(&[
        "train", "--labels-file", s(&labels), "--image-dir", s(&images), "--backbones", "tiny_a,tiny_b", "--epochs", "10",
        "--learning-rate", "0.001", "--seed", "1", "--output-dir", s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = dir.path().join("eval");
    let o = run(&[
        "evaluate", "--checkpoint", s(&out.join("checkpoint.ckpt")), "--manifest", s(&out.join("manifest.json")), "--split",
        "train", "--output-dir", s(&eval),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: ensemble_dr::MetricsReport = serde_json::from_slice(&std::fs::read(eval.join("metrics.json")).unwrap()).unwrap();
    assert!(report.accuracy >= 0.95, "train-split accuracy {}", report.accuracy);
}
