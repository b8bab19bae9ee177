use std::path::Path;
use std::process::{Command, Output};

fn calib(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calib"))
        .arg("--quiet")
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> String {
    let o = calib(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn gen_data_writes_manifest_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(dir, &["gen-data", "--plant", "drone", "--count", "10", "--length", "61", "--seed", "7"]);
    }
    let mut files: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    let csvs = files.iter().filter(|f| f.to_str().unwrap().ends_with(".csv")).count();
    assert_eq!(csvs, 10);
    assert!(a.join("dataset.json").exists());
    assert!(a.join("gen-data.config.json").exists());
    for f in files.iter().filter(|f| f.to_str().unwrap().ends_with(".csv")) {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(csv_rows(&a.join(f)), 61);
    }
    let snap: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("gen-data.config.json")).unwrap()).unwrap();
    assert_eq!(snap["resolved"]["input_ranges"][0], serde_json::json!([0.0, 5.0]));
}

#[test]
fn linear_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let sim = tmp.path().join("sim");
    ok(&data, &["gen-data", "--plant", "double-integrator", "--count", "1", "--length", "200", "--seed", "3"]);
    let fit = ok(&model, &["fit-lti", "--data", p(&data), "--L", "3", "--nb", "2"]);
    assert!(fit.contains("g_dim 6"), "{fit}");
    let synth = ok(&model, &["synth", "--rep", p(&model.join("lti_model.json")), "--beta", "0.05"]);
    assert!(synth.contains("certificate passed"), "{synth}");
    ok(
        &sim,
        &[
            "simulate",
            "--controller",
            "lti",
            "--plant",
            "double-integrator",
            "--init",
            "2,-1",
            "--steps",
            "200",
            "--model",
            p(&model.join("controller.json")),
            "--rep",
            p(&model.join("lti_model.json")),
        ],
    );
    let log = sim.join("closed_loop_lti.csv");
    assert_eq!(csv_rows(&log), 200);
    let last = std::fs::read_to_string(&log).unwrap().lines().last().unwrap().to_string();
    let values: Vec<f64> = last.split(',').take(3).map(|v| v.parse().unwrap()).collect();
    assert!(values[1..].iter().all(|v| v.abs() < 1e-3), "{last}");
    ok(
        &model,
        &[
            "eval",
            "--controller",
            p(&model.join("controller.json")),
            "--rep",
            p(&model.join("lti_model.json")),
        ],
    );
    assert!(model.join("certificate.json").exists());
}

#[test]
fn infeasible_synthesis_exits_three_with_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&data, &["gen-data", "--plant", "integrator", "--count", "1", "--length", "100"]);
    ok(tmp.path(), &["fit-lti", "--data", p(&data), "--L", "1", "--nb", "1"]);
    let o = calib(tmp.path(), &["synth", "--rep", p(&tmp.path().join("lti_model.json")), "--beta", "1.0", "--max-iters", "200"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("infeasible_report.json").exists());
    assert!(!tmp.path().join("controller.json").exists());
}

#[test]
fn exit_codes_classify_failures() {
    let tmp = tempfile::tempdir().unwrap();
    // validation
    assert_eq!(calib(tmp.path(), &["gen-data", "--count", "0"]).status.code(), Some(2));
    assert_eq!(calib(tmp.path(), &["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(calib(tmp.path(), &["gen-data", "--plant", "integrator", "--near-origin"]).status.code(), Some(2));
    // missing input
    let missing = tmp.path().join("nowhere");
    assert_eq!(calib(tmp.path(), &["fit-lti", "--data", p(&missing)]).status.code(), Some(4));
    // layout mismatch: drone data cannot be simulated on a scalar plant
    let data = tmp.path().join("data");
    ok(&data, &["gen-data", "--plant", "integrator", "--count", "1", "--length", "60"]);
    ok(tmp.path(), &["fit-lti", "--data", p(&data), "--L", "1", "--nb", "1"]);
    let rep = tmp.path().join("lti_model.json");
    assert_eq!(calib(tmp.path(), &["synth", "--rep", p(&rep), "--beta", "1.5"]).status.code(), Some(2));
    ok(tmp.path(), &["synth", "--rep", p(&rep)]);
    let o = calib(
        tmp.path(),
        &["simulate", "--controller", "lti", "--model", p(&tmp.path().join("controller.json")), "--steps", "5"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn calib_train_simulate_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let (train, test, run) = (tmp.path().join("train"), tmp.path().join("test"), tmp.path().join("run"));
    ok(&train, &["gen-data", "--count", "20", "--length", "30", "--seed", "1"]);
    ok(&test, &["gen-data", "--count", "4", "--length", "30", "--seed", "1", "--split", "test"]);
    let out = ok(
        &run,
        &[
            "train-calib",
            "--train",
            p(&train),
            "--test",
            p(&test),
            "--L",
            "4",
            "--epochs",
            "1",
            "--width",
            "8",
        ],
    );
    assert!(out.contains("g_dim 19"), "{out}");
    let ckpt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("model.ckpt.json")).unwrap()).unwrap();
    assert_eq!(ckpt["g_dim"], 19);
    assert_eq!(csv_rows(&run.join("metrics.csv")), 2);
    let ckpt_path = run.join("model.ckpt.json");
    ok(&run, &["simulate", "--controller", "calib", "--model", p(&ckpt_path), "--steps", "30", "--predict", "20"]);
    assert_eq!(csv_rows(&run.join("closed_loop_calib.csv")), 30);
    assert_eq!(csv_rows(&run.join("predicted.csv")), 20);
    ok(&run, &["eval", "--model", p(&ckpt_path), "--data", p(&test)]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("eval_report.json")).unwrap()).unwrap();
    assert_eq!(report["pairs"], 4 * (30 - 4 - 1));
}

#[test]
fn deepc_runs_on_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&data, &["gen-data", "--near-origin", "--count", "1", "--length", "301", "--seed", "1"]);
    ok(
        tmp.path(),
        &[
            "simulate",
            "--controller",
            "deepc",
            "--data",
            p(&data),
            "--init",
            "0.3,0.3,0.3",
            "--steps",
            "40",
            "--saturate",
            "-0.5:0.5,-0.05:0.05,-0.5:0.5",
        ],
    );
    assert_eq!(csv_rows(&tmp.path().join("closed_loop_deepc.csv")), 40);
    let snap = std::fs::read_to_string(tmp.path().join("simulate.config.json")).unwrap();
    assert!(snap.contains("saturation"));
}
