use std::fs;
use std::process::{Command, Output};

use gansearch::search_space::random_genome;

fn gansearch(args: &[&str], cwd: &std::path::Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gansearch"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn empty_config_fails_with_a_coded_single_line_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("empty.toml"), "").unwrap();
    let out = gansearch(&["search", "--config", "empty.toml"], tmp.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[E_CONFIG]: "), "{err}");
    for key in ["seed", "budget", "evaluator"] {
        assert!(err.contains(key), "{err}");
    }
}

#[test]
fn missing_files_and_empty_runs_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gansearch(&["decode", "--genome", "nope.json"], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[E_IO]: "));
    let out = gansearch(&["report", "."], tmp.path());
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[E_NO_DATA]: "));
}

#[test]
fn search_report_and_resume_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(
        tmp.path().join("cfg.toml"),
        "seed = 2\nbudget = 30\nevaluator = \"surrogate\"\nlr = 3.0\n",
    )
    .unwrap();
    let out = gansearch(&["search", "--config", "cfg.toml", "--out", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["config.toml", "genomes.jsonl", "evals.jsonl", "history.csv", "checkpoint.json"] {
        assert!(tmp.path().join("run").join(f).exists(), "{f}");
    }
    let out = gansearch(&["resume", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let out = gansearch(&["report", "run"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("evaluations: 30"));
    let out = gansearch(&["search", "--config", "cfg.toml", "--out", "run"], tmp.path());
    assert!(stderr(&out).starts_with("error[E_RUN_EXISTS]: "));

    let out = gansearch(&["baseline-random", "--config", "cfg.toml", "--out", "random"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read_to_string(tmp.path().join("random/history.csv")).unwrap().lines().count(), 4);
}

#[test]
fn decode_and_surrogate_eval() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("g.json"), random_genome(17).to_record()).unwrap();
    let out = gansearch(&["decode", "--genome", "g.json"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("module up"));
    assert!(text.contains("generator parameters (desk):"));

    let out = gansearch(&["decode", "--genome", "g.json", "--json"], tmp.path());
    let dump: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump["modules"].as_array().unwrap().len(), 3);
    assert!(dump["generator"]["params"].as_u64().unwrap() > 0);

    let out = gansearch(&["eval", "--genome", "g.json", "--evaluator", "surrogate"], tmp.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["is_mean"].as_f64().unwrap() >= 1.0);
}
