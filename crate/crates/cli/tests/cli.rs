use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lnshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lnshift"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = lnshift(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("grid.json");
    fs::write(
        &path,
        r#"{
  "class_counts": [2],
  "mean_shift_scales": [0.0, 2.0],
  "var_shift_scales": [0.0, 2.0],
  "train_fractions": [0.1, 0.5],
  "samples_per_class": 40,
  "pretrain": {"learning_rate": 0.05, "epochs": 60, "seed": 42},
  "finetune": {"learning_rate": 0.05, "epochs": 40, "seed": 42}
}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gen_train_sweep_rescale() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = small_config(dir.path());

    ok(&["gen", "--config", &cfg, "--classes", "4", "--fractions", "0.1", "--mean-shift", "1.0", "--out", d]);
    let train_csv = fs::read_to_string(dir.path().join("target_train.csv")).unwrap();
    assert!(train_csv.starts_with("x0,x1,label\n"));
    assert_eq!(train_csv.lines().count(), 1 + 4 * 4);

    let out = ok(&["train", "--config", &cfg, "--strategy", "CYCLIC", "--var-shift", "1.5", "--out", d]);
    assert!(out.contains("CYCLIC"));
    let src = dir.path().join("source.json");
    let tuned = dir.path().join("tuned.json");
    let test = dir.path().join("target_test.csv");
    let (s, t, x) = (src.to_str().unwrap(), tuned.to_str().unwrap(), test.to_str().unwrap());

    let sweep: serde_json::Value = serde_json::from_str(&ok(&["sweep", "--source", s, "--tuned", t, "--test", x])).unwrap();
    assert_eq!(sweep["lambdas"].as_array().unwrap().len(), 21);
    let single: serde_json::Value =
        serde_json::from_str(&ok(&["sweep", "--source", s, "--tuned", t, "--test", x, "--lambda", "1.0"])).unwrap();
    let at_one = sweep["accuracies"][10].as_f64().unwrap();
    assert_eq!(single["best_accuracy"].as_f64().unwrap(), at_one);

    let zero = dir.path().join("zero.json");
    ok(&["rescale", "--source", s, "--tuned", t, "--lambda", "0", "--out", zero.to_str().unwrap()]);
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(&src).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(&zero).unwrap()).unwrap();
    assert_eq!(a["ln"]["gamma"], b["ln"]["gamma"]);

    let svd = dir.path().join("svd.json");
    ok(&["rescale", "--source", s, "--tuned", t, "--kind", "SVD_FIRST", "--k", "1", "--out", svd.to_str().unwrap()]);
    assert!(svd.exists());
}

#[test]
fn grid_then_report_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let text = ok(&["grid", "--config", &cfg, "--jobs", "2", "--out", o]);
    assert!(text.contains("8 cases"));
    let cases = fs::read_to_string(out.join("cases.csv")).unwrap();
    assert_eq!(cases.lines().count(), 9);

    let again = dir.path().join("again");
    ok(&["report", o, "--out", again.to_str().unwrap()]);
    for name in ["cases.csv", "summary.json", "lambda_hist.csv", "fsr_by_fraction.csv", "case_shifts.csv"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn bad_input_is_reported() {
    let out = lnshift(&["grid", "--strategy", "NOPE"]);
    assert!(!out.status.success());
    let out = lnshift(&["report", "/nonexistent/dir"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/dir"));
}
