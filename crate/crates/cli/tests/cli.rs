use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use upl_core::data::write_dataset;
use upl_core::rng::seeded;
use upl_core::synthetic::PlantedPartition;

fn upl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upl"))
        .args(args)
        .env_remove("UPL_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A 4-class planted-partition dataset with an imbalanced masks.json.
fn fixture() -> (TempDir, PathBuf) {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("planted");
    let dataset = PlantedPartition::default().generate(&mut seeded(3)).unwrap();
    write_dataset(&dataset, &dir).unwrap();
    let out = upl(&[
        "split",
        "--dataset",
        dir.to_str().unwrap(),
        "--counts",
        "10,10,10,2",
        "--val-test",
        "fixed:40,80",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    (tmp, dir)
}

fn write_config(dir: &Path, dataset: &Path, method: &str) -> PathBuf {
    let path = dir.join(format!("{method}.json"));
    let config = serde_json::json!({
        "dataset": dataset,
        "method": method,
        "upl": {
            "outer_iterations": 2,
            "perturbation": {"t": 5, "s_k": 10},
            "training": {"epochs": 40, "patience": 10, "hidden_dim": 16}
        }
    });
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn split_is_deterministic_and_reports_rho() {
    let (tmp, dir) = fixture();
    let run = |name: &str| {
        let out_path = tmp.path().join(name);
        let out = upl(&[
            "split",
            "--seed",
            "7",
            "--dataset",
            dir.to_str().unwrap(),
            "--base",
            "20",
            "--rho",
            "10",
            "--minority-classes",
            "2",
            "--val-test",
            "half",
            "--out",
            out_path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        (String::from_utf8(out.stdout).unwrap(), std::fs::read(out_path).unwrap())
    };
    let (stdout, first) = run("a.json");
    let (_, second) = run("b.json");
    assert_eq!(first, second);
    assert!(stdout.contains("[20, 20, 2, 2]"), "{stdout}");
    assert!(stdout.contains("rho = 10"), "{stdout}");
}

#[test]
fn split_rejects_wrong_count_length() {
    let (_tmp, dir) = fixture();
    let out = upl(&["split", "--dataset", dir.to_str().unwrap(), "--counts", "5,5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn run_appends_rows_and_checkpoints_evaluate() {
    let (tmp, dir) = fixture();
    let config = write_config(tmp.path(), &dir, "upl");
    let results = tmp.path().join("results.csv");
    let checkpoints = tmp.path().join("ckpt");
    let out = upl(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seeds",
        "0..1",
        "--out",
        results.to_str().unwrap(),
        "--checkpoint-dir",
        checkpoints.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&results);
    assert_eq!(rows.len(), 2);
    let header = csv::Reader::from_path(&results).unwrap().headers().unwrap().clone();
    assert_eq!(header.len(), 14);
    assert_eq!(&header[0], "dataset");
    let bacc: f64 = rows[0][9].parse().unwrap();
    assert!((0.0..=1.0).contains(&bacc));
    assert_eq!(&rows[0][1], "upl");

    let checkpoint = checkpoints.join("planted-upl-seed1.json");
    let masks = checkpoints.join("planted-upl-seed1.masks.json");
    let out = upl(&[
        "eval",
        "--dataset",
        dir.to_str().unwrap(),
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--masks",
        masks.to_str().unwrap(),
        "--mask",
        "test",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let eval_bacc = report["balanced_accuracy"].as_f64().unwrap();
    let row_bacc: f64 = rows[1][9].parse().unwrap();
    assert!((eval_bacc - row_bacc).abs() < 1e-12);

    let out = upl(&[
        "bounds",
        "--dataset",
        dir.to_str().unwrap(),
        "--class-pair",
        "0,3",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--masks",
        masks.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["observed_true_risk"].as_f64().is_some());
}

#[test]
fn sweep_writes_one_row_per_point_and_rejects_empty_grid() {
    let (tmp, dir) = fixture();
    let config = write_config(tmp.path(), &dir, "upl");
    let path = tmp.path().join("sweep.csv");
    let out = upl(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--param",
        "alpha-q",
        "--grid",
        "0.7,0.9",
        "--seeds",
        "0",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = csv_rows(&path);
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "alpha_q");
    assert_eq!(&rows[1][1], "0.9");

    let out = upl(&["sweep", "--config", config.to_str().unwrap(), "--param", "eta-l", "--grid", ""]);
    assert_eq!(out.status.code(), Some(1));

    let baseline = write_config(tmp.path(), &dir, "bs");
    let out = upl(&["sweep", "--config", baseline.to_str().unwrap(), "--param", "eta-u"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_echoes_inputs_and_requires_caps() {
    let (_tmp, dir) = fixture();
    let out = upl(&[
        "bounds",
        "--dataset",
        dir.to_str().unwrap(),
        "--class-pair",
        "0,3",
        "--gamma",
        "0.5",
        "--delta",
        "0.05",
        "--depth",
        "3",
        "--frobenius-caps",
        "1,1,1",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["inputs"]["gamma"], 0.5);
    assert_eq!(report["inputs"]["delta"], 0.05);
    assert_eq!(report["inputs"]["depth"], 3);
    assert!(report["total"].as_f64().unwrap() > 0.0);

    let out = upl(&["bounds", "--dataset", dir.to_str().unwrap(), "--class-pair", "0,3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_dataset_fails_cleanly() {
    let out = upl(&["eval", "--dataset", "/nonexistent/data", "--checkpoint", "/nonexistent/m.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nonexistent"));
}
