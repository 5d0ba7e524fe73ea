use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lesion-outcome"));
    c.env_remove("LESION_OUTCOME_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

/// synth -> extract into `root`, returning the features CSV path.
fn pipeline_inputs(root: &Path, seed: &str) -> PathBuf {
    let syn = root.join("syn");
    let ext = root.join("ext");
    ok(&["synth", "--seed", seed, "--n", "60", "--centres", "3", "-o", p(&syn)]);
    ok(&["extract", "--clinical", p(&syn.join("clinical.csv")), "-o", p(&ext)]);
    ext.join("features.csv")
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let features = pipeline_inputs(d.path(), "4");
        let tr = d.path().join("train");
        let ev = d.path().join("eval");
        ok(&["train", "--features", p(&features), "--seed", "9", "--n-trees", "40", "--holdout-centres", "C01", "-o", p(&tr)]);
        ok(&["evaluate", "--model", p(&tr.join("model.json")), "--features", p(&features), "--holdout-centres", "C01", "-o", p(&ev)]);
        assert!(d.path().join("ext/exclusions.csv").exists());
        assert!(ev.join("roc.csv").exists() && ev.join("importance_local.csv").exists());
        let echo = json(ev.join("run_config.json"));
        assert!(echo["metadata"]["created_unix_seconds"].as_u64().unwrap() > 0);
    }
    for rel in ["syn/clinical.csv", "syn/masks/P00001.nii.gz", "syn/ground_truth.json", "ext/features.csv", "train/model.json", "eval/report.json", "eval/roc.csv"] {
        let a = std::fs::read(dirs[0].path().join(rel)).unwrap();
        let b = std::fs::read(dirs[1].path().join(rel)).unwrap();
        assert!(a == b, "{rel} differs between identical runs");
    }
    let train_echo = json(dirs[0].path().join("train/run_config.json"));
    assert_eq!(train_echo["settings"]["seed"], 9);

    let report_path = dirs[0].path().join("eval/report.json");
    let text = std::fs::read_to_string(&report_path).unwrap();
    let report: lesion_outcome::metrics::EvaluationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
}

#[test]
fn corrupt_mask_is_logged_and_skipped() {
    let d = tempfile::tempdir().unwrap();
    let syn = d.path().join("syn");
    ok(&["synth", "--seed", "2", "--n", "12", "--centres", "2", "-o", p(&syn)]);
    std::fs::write(syn.join("masks/P00003.nii.gz"), b"not a nifti file").unwrap();
    let ext = d.path().join("ext");
    ok(&["extract", "--clinical", p(&syn.join("clinical.csv")), "-o", p(&ext)]);
    let log = std::fs::read_to_string(ext.join("exclusions.csv")).unwrap();
    assert!(log.contains("P00003,mask_unreadable"), "{log}");
    let rows = std::fs::read_to_string(ext.join("features.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 11);
}

#[test]
fn usage_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let out = run(&["train", "--features", "x.csv", "-o", p(d.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    assert_eq!(run(&["synth", "-o", p(d.path())]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(std::fs::read_dir(d.path()).unwrap().count(), 0);
}

#[test]
fn failures_leave_no_outputs() {
    let d = tempfile::tempdir().unwrap();
    let features = pipeline_inputs(d.path(), "5");
    let tr = d.path().join("train");
    ok(&["train", "--features", p(&features), "--seed", "1", "--n-trees", "10", "-o", p(&tr)]);

    let bad = d.path().join("bad");
    let out = run(&["evaluate", "--model", p(&tr.join("model.json")), "--features", p(&features), "--holdout-centres", "NOPE", "-o", p(&bad)]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!bad.exists());

    // schema mismatch: a table without the imaging columns
    let marshall_only = d.path().join("marshall.csv");
    let text = std::fs::read_to_string(&features).unwrap();
    let trimmed: String = text
        .lines()
        .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    std::fs::write(&marshall_only, trimmed).unwrap();
    let out = run(&["evaluate", "--model", p(&tr.join("model.json")), "--features", p(&marshall_only), "-o", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!bad.exists());

    let spec = d.path().join("spec.json");
    std::fs::write(&spec, r#"{"intercept": 0, "effects": [{"feature": "shoe_size", "weight": 1}]}"#).unwrap();
    let out = run(&["synth", "--seed", "1", "--effect-spec", p(&spec), "-o", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!bad.exists());
}

fn write_table(path: &Path, rows: &[(&str, &str, bool, u8)]) {
    let mut s = String::from("patient_id,centre_id,unfavourable,marshall\n");
    for (id, centre, label, marshall) in rows {
        s.push_str(&format!("{id},{centre},{},{marshall}\n", u8::from(*label)));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn perfect_test_set_and_compare() {
    let d = tempfile::tempdir().unwrap();
    let table = d.path().join("t.csv");
    let rows: Vec<(String, bool, u8)> = (0..40).map(|i| (format!("P{i:02}"), i % 2 == 0, if i % 2 == 0 { 5 } else { 2 })).collect();
    let borrowed: Vec<(&str, &str, bool, u8)> =
        rows.iter().enumerate().map(|(i, (id, l, m))| (id.as_str(), if i < 30 { "A" } else { "B" }, *l, *m)).collect();
    write_table(&table, &borrowed);
    let tr = d.path().join("tr");
    ok(&["train", "--features", p(&table), "--model-config", "marshall", "--seed", "3", "--holdout-centres", "B", "-o", p(&tr)]);
    let ev = d.path().join("ev");
    ok(&["evaluate", "--model", p(&tr.join("model.json")), "--features", p(&table), "--holdout-centres", "B", "-o", p(&ev)]);
    let report = json(ev.join("report.json"));
    assert_eq!(report["auroc"], 1.0);
    assert_eq!(report["n_test"], 10);

    let cmp = d.path().join("cmp");
    let r = ev.join("report.json");
    ok(&["compare", "--report-a", p(&r), "--report-b", p(&r), "--seed", "1", "--permutations", "500", "-o", p(&cmp)]);
    let c = json(cmp.join("comparison.json"));
    assert!(c["p_value"].as_f64().unwrap() >= 0.5);
    assert_eq!(c["n_permutations"], 500);

    // a report over different patients is rejected
    let ev2 = d.path().join("ev2");
    ok(&["evaluate", "--model", p(&tr.join("model.json")), "--features", p(&table), "--holdout-centres", "A", "-o", p(&ev2)]);
    let out = run(&["compare", "--report-a", p(&r), "--report-b", p(&ev2.join("report.json")), "--seed", "1", "-o", p(&d.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_env_precedence() {
    let d = tempfile::tempdir().unwrap();
    let features = pipeline_inputs(d.path(), "6");
    let cfg = d.path().join("run.toml");
    std::fs::write(&cfg, "seed = 11\nn_trees = 7\nmodel_config = \"global+clinical\"\n").unwrap();
    let env_out = d.path().join("from-env");
    let out = bin()
        .args(["train", "--features", p(&features), "--config-file", p(&cfg), "--n-trees", "5"])
        .env("LESION_OUTCOME_OUT", &env_out)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let echo = json(env_out.join("run_config.json"));
    assert_eq!(echo["settings"]["seed"], 11);
    assert_eq!(echo["settings"]["forest"]["n_trees"], 5);
    assert_eq!(echo["settings"]["model_config"], "global+clinical");
    let model = json(env_out.join("model.json"));
    assert_eq!(model["forest"]["trees"].as_array().unwrap().len(), 5);

    std::fs::write(&cfg, "seeed = 1\n").unwrap();
    let out = run(&["train", "--features", p(&features), "--config-file", p(&cfg), "--seed", "1", "-o", p(&d.path().join("y"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cv_centre_cv_and_importance() {
    let d = tempfile::tempdir().unwrap();
    let features = pipeline_inputs(d.path(), "7");
    let cv = d.path().join("cv");
    ok(&["cross-validate", "--features", p(&features), "--folds", "3", "--n-trees", "20", "--seed", "2", "-o", p(&cv)]);
    let r = json(cv.join("cv.json"));
    assert_eq!(r["mechanism"], "stratified-k-fold");
    assert_eq!(r["fold_aurocs"].as_array().unwrap().len(), 3);
    assert_eq!(r["std_convention"], "population");

    let cc = d.path().join("cc");
    ok(&["centre-cv", "--features", p(&features), "--model-configs", "marshall,local+clinical", "--n-trees", "20", "-o", p(&cc)]);
    let table = std::fs::read_to_string(cc.join("centre_table.csv")).unwrap();
    assert!(table.starts_with("centre,n_test,pct_of_total,n_unfavourable,pct_unfavourable,marshall,local+clinical\n"));
    assert_eq!(table.lines().count(), 4);

    let tr = d.path().join("tr");
    ok(&["train", "--features", p(&features), "--seed", "1", "--n-trees", "20", "--model-config", "global+local", "-o", p(&tr)]);
    let imp = d.path().join("imp");
    ok(&["importance", "--model", p(&tr.join("model.json")), "-o", p(&imp)]);
    let global = std::fs::read_to_string(imp.join("importance_global.csv")).unwrap();
    assert_eq!(global.lines().next().unwrap(), "class,count,mean,median,p25,p75");
    assert_eq!(std::fs::read_to_string(imp.join("importance_local.csv")).unwrap().lines().count(), 1 + 256);
}
