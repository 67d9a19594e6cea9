use std::path::Path;
use std::process::{Command, Output};

fn slds(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slds"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn simulate(dir: &Path, name: &str, seed: &str) {
    let out = slds(
        dir,
        &["simulate", "--states", "3", "--obs-dim", "2", "--length", "15", "--num-series", "12", "--seed", seed, "--out", name],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn repeated_training_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "train.csv", "1");
    for (beta, name) in [("0", "a.json"), ("0", "b.json"), ("2", "c.json"), ("2", "d.json")] {
        let out = slds(
            dir.path(),
            &["train", "--input", "train.csv", "--states", "2", "--beta", beta, "--max-iter", "20", "--model-out", name],
        );
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stderr(&out).contains("\"em_max_iter\":20"), "effective configuration is logged");
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.json"), read("b.json"));
    assert_eq!(read("c.json"), read("d.json"));
    assert_ne!(read("a.json"), read("c.json"));
}

#[test]
fn predict_requires_phi_after_psi() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "data.csv", "1");
    let out = slds(dir.path(), &["train", "--input", "data.csv", "--states", "2", "--max-iter", "5", "--model-out", "m.json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let bad = slds(dir.path(), &["predict", "--model", "m.json", "--input", "data.csv", "--psi", "4", "--phi", "4"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("psi"));

    let good = slds(dir.path(), &["predict", "--model", "m.json", "--input", "data.csv", "--psi", "4", "--phi", "6"]);
    assert_eq!(code(&good), 0, "{}", stderr(&good));
    let text = String::from_utf8(good.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "series_id,y1,y2");
    assert_eq!(lines.len(), 13);
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&slds(dir.path(), &["train", "--states", "2"])), 1);
    assert_eq!(code(&slds(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&slds(dir.path(), &["--help"])), 0);

    let missing = slds(dir.path(), &["train", "--input", "none.csv", "--states", "2", "--model-out", "m.json"]);
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("loading none.csv"));

    std::fs::write(dir.path().join("bad.csv"), "series_id,variable,timestamp,value\na,x,0,1\na,x,0,2\n").unwrap();
    let dup = slds(dir.path(), &["train", "--input", "bad.csv", "--states", "2", "--model-out", "m.json"]);
    assert_eq!(code(&dup), 2);

    simulate(dir.path(), "data.csv", "1");
    let zero_tol = slds(dir.path(), &["train", "--input", "data.csv", "--states", "2", "--tol", "0", "--model-out", "m.json"]);
    assert_eq!(code(&zero_tol), 1);
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "data.csv", "1");
    std::fs::write(dir.path().join("cfg.json"), r#"{"em_max_iter": 3, "seed": 9}"#).unwrap();
    let out = slds(
        dir.path(),
        &["--config", "cfg.json", "train", "--input", "data.csv", "--states", "2", "--seed", "4", "--model-out", "m.json"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = stderr(&out);
    assert!(log.contains("\"em_max_iter\":3"), "{log}");
    assert!(log.contains("\"seed\":4"), "{log}");

    std::fs::write(dir.path().join("typo.json"), r#"{"em_max_iters": 3}"#).unwrap();
    let typo = slds(dir.path(), &["--config", "typo.json", "train", "--input", "data.csv", "--states", "2", "--model-out", "m.json"]);
    assert_eq!(code(&typo), 1);
}

#[test]
fn sweep_and_evaluate_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "train.csv", "1");
    simulate(dir.path(), "test.csv", "2");
    let out = slds(
        dir.path(),
        &[
            "sweep", "--train", "train.csv", "--test", "test.csv", "--states", "2,3,4,5,6,7,8,9,12,15", "--betas", "0,1",
            "--repeats", "2", "--max-iter", "3", "--out-dir", "reports",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = std::fs::read_to_string(dir.path().join("reports/amae_table.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "method,beta,2,3,4,5,6,7,8,9,12,15");
    assert!(out.stdout.is_empty());

    let train = slds(dir.path(), &["train", "--input", "train.csv", "--states", "3", "--max-iter", "5", "--model-out", "m.json"]);
    assert_eq!(code(&train), 0);
    let eval = slds(
        dir.path(),
        &["evaluate", "--model", "m.json", "--input", "test.csv", "--repeats", "3", "--out", "scores.json"],
    );
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    let scores: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("scores.json")).unwrap()).unwrap();
    assert_eq!(scores["amae"].as_array().unwrap().len(), 3);
    assert_eq!(scores["tasks_per_repeat"], serde_json::json!([60, 60, 60]));
}
