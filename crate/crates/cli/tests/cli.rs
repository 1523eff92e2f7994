use std::path::Path;
use std::process::{Command, Output};

fn lmmg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lmmg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run lmmg")
}

fn ok(args: &[&str], cwd: &Path) -> serde_json::Value {
    let out = lmmg(args, cwd);
    assert!(
        out.status.success(),
        "lmmg {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or(serde_json::Value::Null)
}

fn synth(cwd: &Path) {
    ok(
        &[
            "synth",
            "--preset",
            "homophily",
            "--n",
            "60",
            "--l",
            "6",
            "--k",
            "2",
            "--seed",
            "3",
            "--out-prefix",
            "s",
        ],
        cwd,
    );
}

const DATA: [&str; 4] = ["--edges", "s.edges.tsv", "--features", "s.features.tsv"];

#[test]
fn fit_then_predict_features() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    synth(cwd);
    let fit = [
        &["fit", "--k", "2", "--max-iters", "60", "--out", "m.json"][..],
        &DATA,
    ]
    .concat();
    ok(&fit, cwd);
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cwd.join("m.json")).unwrap()).unwrap();
    assert_eq!(model["format_version"], 1);
    assert_eq!(model["k"], 2);

    let args = [
        &[
            "predict-features",
            "--model",
            "m.json",
            "--node",
            "n4",
            "--mask",
            "f0,f3",
        ][..],
        &DATA,
    ]
    .concat();
    let r = ok(&args, cwd);
    let scores = r["scores"].as_array().unwrap();
    assert_eq!(scores.len(), 2);
    assert_eq!(scores[0]["id"], "f0");
    assert!(r["loglik"].as_f64().unwrap() < 0.0);
}

#[test]
fn link_scores_evaluate_to_an_auc() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    synth(cwd);
    let args = [
        &[
            "predict-links",
            "--k",
            "2",
            "--holdout",
            "n1",
            "--max-iters",
            "60",
            "--out",
            "p.json",
        ][..],
        &DATA,
    ]
    .concat();
    ok(&args, cwd);
    let m = ok(&["eval", "--scores", "p.json"], cwd);
    let auc = m["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert_eq!(m["count"], 59);

    let base = [
        &[
            "baseline", "--method", "avg", "--task", "links", "--node", "n1", "--out", "b.json",
        ][..],
        &DATA,
    ]
    .concat();
    ok(&base, cwd);
    assert_eq!(ok(&["eval", "--scores", "b.json"], cwd)["count"], 59);
}

#[test]
fn eval_reads_tab_separated_scores() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.tsv"), "0.9\t1\n0.2\t0\n0.6\t0\n0.7\t1\n").unwrap();
    let m = ok(&["eval", "--scores", "s.tsv"], dir.path());
    assert_eq!(m["auc"], 1.0);
    assert_eq!(m["accuracy"], 0.75);
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    synth(cwd);
    assert_eq!(lmmg(&["fit", "--bogus"], cwd).status.code(), Some(1));
    let too_many = [&["fit", "--k", "7"][..], &DATA].concat();
    assert_eq!(lmmg(&too_many, cwd).status.code(), Some(1));
    let bad_rate = [&["fit", "--k", "2", "--gamma-phi", "-1"][..], &DATA].concat();
    assert_eq!(lmmg(&bad_rate, cwd).status.code(), Some(1));
    let missing = lmmg(
        &[
            "fit",
            "--k",
            "1",
            "--edges",
            "nope.tsv",
            "--features",
            "s.features.tsv",
        ],
        cwd,
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.tsv"));
    std::fs::write(cwd.join("bad.tsv"), "node\tx\na\t7\n").unwrap();
    let bad = lmmg(
        &[
            "fit",
            "--k",
            "1",
            "--edges",
            "s.edges.tsv",
            "--features",
            "bad.tsv",
        ],
        cwd,
    );
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad.tsv:2"));
    assert_eq!(lmmg(&["--help"], cwd).status.code(), Some(0));
}

#[test]
fn classify_and_select_k_produce_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cwd = dir.path();
    synth(cwd);
    let c = [
        &[
            "classify",
            "--k",
            "2",
            "--label-col",
            "f1",
            "--max-iters",
            "40",
        ][..],
        &DATA,
    ]
    .concat();
    let r = ok(&c, cwd);
    assert_eq!(r["scores"].as_array().unwrap().len(), 30);
    let s = [
        &[
            "select-k",
            "--candidates",
            "1,2",
            "--reps",
            "2",
            "--max-iters",
            "30",
        ][..],
        &DATA,
    ]
    .concat();
    let r = ok(&s, cwd);
    assert!([1, 2].contains(&r["chosen_k"].as_u64().unwrap()));
    assert_eq!(r["cv_loglik"].as_array().unwrap().len(), 2);
}
