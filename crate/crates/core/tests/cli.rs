use std::fs;
use std::path::Path;
use std::process::Command;

fn tcnn(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tcnn")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn no_arguments_is_usage_error() {
    let (code, _, err) = tcnn(&[]);
    assert_eq!(code, 2);
    assert!(err.contains("Usage"));
    assert_eq!(tcnn(&["simulate", "--nope"]).0, 2);
}

#[test]
fn simulate_then_benchmark_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    let (code, _, err) = tcnn(&["simulate", "--n", "200", "--p", "10", "--seed", "7", "--out", &data]);
    assert_eq!(code, 0, "{err}");
    let first = fs::read_to_string(&data).unwrap();
    assert!(first.starts_with("# tcnn simulate n=200 p=10"));
    tcnn(&["simulate", "--n", "200", "--p", "10", "--seed", "7", "--out", &data]);
    assert_eq!(first, fs::read_to_string(&data).unwrap());

    let mut reports = Vec::new();
    for name in ["r1.csv", "r2.csv"] {
        let report = p(dir.path(), name);
        let (code, out, err) = tcnn(&[
            "benchmark",
            "--data",
            &data,
            "--reps",
            "2",
            "--seed",
            "3",
            "--epochs",
            "2",
            "--models",
            "snn,tcnn",
            "--out-report",
            &report,
        ]);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("TCNN"));
        reports.push(fs::read_to_string(&report).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let lines: Vec<&str> = reports[0].lines().collect();
    assert!(lines[0].starts_with("# tcnn benchmark"));
    assert_eq!(lines[1], "model,split,mean,mcerr");
    assert_eq!(lines.len(), 2 + 4);
}

#[test]
fn train_scores_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    assert_eq!(
        tcnn(&["simulate", "--n", "150", "--p", "4", "--seed", "1", "--out", &data]).0,
        0
    );

    let config = p(dir.path(), "train.cfg");
    fs::write(&config, "# settings\nepochs = 50\ntau_layers = 6\nmu_layers=7\n").unwrap();
    let model = p(dir.path(), "m.tcnn");
    let (code, _, err) = tcnn(&[
        "train",
        "--model",
        "icnn",
        "--data",
        &data,
        "--config",
        &config,
        "--epochs",
        "3",
        "--out-model",
        &model,
    ]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(&model).unwrap();
    let comment = text.lines().nth(1).unwrap();
    assert!(comment.contains("epochs=3"), "flag must override config: {comment}");
    assert!(comment.contains("tau_layers=6") && comment.contains("mu_layers=7"));

    let scores = p(dir.path(), "s.csv");
    let (code, _, err) = tcnn(&[
        "scores",
        "--model-file",
        &model,
        "--grid-min",
        "-2",
        "--grid-max",
        "2",
        "--grid-points",
        "10",
        "--draws",
        "8",
        "--level",
        "0.9",
        "--out",
        &scores,
    ]);
    assert_eq!(code, 0, "{err}");
    let s = fs::read_to_string(&scores).unwrap();
    assert!(s.starts_with('#'));
    assert_eq!(s.lines().count(), 2 + 2 * 4 * 10);

    let pred = p(dir.path(), "p.csv");
    let (code, _, err) = tcnn(&[
        "predict",
        "--model-file",
        &model,
        "--data",
        &data,
        "--draws",
        "5",
        "--out",
        &pred,
    ]);
    assert_eq!(code, 0, "{err}");
    let out = fs::read_to_string(&pred).unwrap();
    assert_eq!(out.lines().nth(1), Some("tau_hat,mean,lower,upper"));
    assert_eq!(out.lines().count(), 2 + 150);
}

#[test]
fn scores_rejects_non_icnn() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    tcnn(&["simulate", "--n", "80", "--p", "4", "--out", &data]);
    let model = p(dir.path(), "snn.tcnn");
    assert_eq!(
        tcnn(&[
            "train",
            "--model",
            "snn",
            "--data",
            &data,
            "--epochs",
            "1",
            "--out-model",
            &model
        ])
        .0,
        0
    );
    let (code, _, err) = tcnn(&["scores", "--model-file", &model, "--out", &p(dir.path(), "s.csv")]);
    assert_eq!(code, 1);
    assert!(err.contains("score functions require icnn"));
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn domain_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = tcnn(&[
        "train",
        "--model",
        "tcnn",
        "--data",
        &p(dir.path(), "missing.csv"),
        "--out-model",
        "x",
    ]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:"));
    let (code, _, _) = tcnn(&["simulate", "--p", "2", "--out", &p(dir.path(), "d.csv")]);
    assert_eq!(code, 1);
}
