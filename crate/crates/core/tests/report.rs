use std::fs;

use gansearch::eval::Surrogate;
use gansearch::report::{emit_report, load_run, progression, ReportError};
use gansearch::search::{run_search_with, EvaluatorKind, SearchConfig, SearchOptions};

fn eval_line(batch: usize, slot: usize, is: f64) -> String {
    format!(
        r#"{{"batch":{batch},"slot":{slot},"attempts":1,"genome_id":"g{batch}_{slot}","is_mean":{is},"is_std":0.0,"fid":null,"reward":0.0,"param_count":0,"steps_trained":0,"diverged":false,"wall_time":0.0}}"#
    )
}

#[test]
fn empty_run_directory_has_no_data() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(tmp.path()), Err(ReportError::NoData(_))));
}

#[test]
fn monotone_log_best_so_far_is_running_max_of_means() {
    let tmp = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for batch in 0..6 {
        for slot in 0..3 {
            text.push_str(&eval_line(batch, slot, 1.0 + batch as f64 * 0.5));
            text.push('\n');
        }
    }
    fs::write(tmp.path().join("evals.jsonl"), text).unwrap();
    let logs = load_run(tmp.path()).unwrap();
    let rows = progression(&logs.evals);
    let mut running = f64::NEG_INFINITY;
    for r in &rows {
        running = running.max(r.mean_is);
        assert_eq!(r.best_so_far_is, running);
    }
    let (summary, _) = emit_report(tmp.path()).unwrap();
    assert_eq!(summary.best_batch, 5);
    assert_eq!(summary.best_is, 3.5);
    assert_eq!(summary.total_evaluations, 18);
}

#[test]
fn corrupt_lines_are_skipped_and_counted() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{}\nnot json\n{}\n", eval_line(0, 0, 2.0), eval_line(0, 1, 3.0));
    fs::write(tmp.path().join("evals.jsonl"), text).unwrap();
    let (summary, _) = emit_report(tmp.path()).unwrap();
    assert_eq!(summary.skipped_lines, 1);
    assert_eq!(summary.total_evaluations, 2);
    assert!(fs::read_to_string(tmp.path().join("summary.txt")).unwrap().contains("skipped log lines: 1"));
}

#[test]
fn reports_are_byte_identical_when_recomputed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = SearchConfig::new(6, 40, EvaluatorKind::Surrogate);
    cfg.lr = 3.0;
    run_search_with(&cfg, tmp.path(), &Surrogate::default(), SearchOptions::default()).unwrap();
    let names = ["progression.csv", "op_freq_up.csv", "op_freq_down.csv", "op_freq_normal.csv", "summary.txt"];
    emit_report(tmp.path()).unwrap();
    let first: Vec<Vec<u8>> = names.iter().map(|n| fs::read(tmp.path().join(n)).unwrap()).collect();
    emit_report(tmp.path()).unwrap();
    let second: Vec<Vec<u8>> = names.iter().map(|n| fs::read(tmp.path().join(n)).unwrap()).collect();
    assert_eq!(first, second);

    let prog = String::from_utf8(first[0].clone()).unwrap();
    assert_eq!(prog.lines().next(), Some("batch,mean_is,best_so_far_is,mean_reward"));
    assert_eq!(prog.lines().count(), 5);
    let up = String::from_utf8(first[1].clone()).unwrap();
    assert!(up.starts_with("batch,tconv3x3,tconv5x5,tconv7x7,nn_up+conv1x1,"));
    for row in up.lines().skip(1) {
        let total: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}
