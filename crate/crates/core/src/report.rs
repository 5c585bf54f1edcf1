//! Analysis outputs computed from a run directory's logs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::search::{op_distribution_history, EvalLine, GenomeLine, RunDir};
use crate::search_space::{alphabet_of, Genome, ModuleKind};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}: no data (no evaluation records)")]
    NoData(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parsed logs of one run.
#[derive(Debug, Clone, Default)]
pub struct RunLogs {
    pub evals: Vec<EvalLine>,
    /// Genomes grouped by batch index.
    pub batches: Vec<Vec<Genome>>,
    /// Lines that failed to parse and were skipped.
    pub skipped: usize,
}

fn read_lines(path: &Path) -> Result<Vec<String>, ReportError> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

pub fn load_run(dir: &Path) -> Result<RunLogs, ReportError> {
    let rd = RunDir::new(dir);
    let mut logs = RunLogs::default();
    for (i, line) in read_lines(&rd.evals())?.iter().enumerate() {
        match serde_json::from_str::<EvalLine>(line) {
            Ok(e) => logs.evals.push(e),
            Err(err) => {
                log::warn!("evals.jsonl line {}: skipped ({err})", i + 1);
                logs.skipped += 1;
            }
        }
    }
    for (i, line) in read_lines(&rd.genomes())?.iter().enumerate() {
        let parsed = serde_json::from_str::<GenomeLine>(line)
            .map_err(|e| e.to_string())
            .and_then(|gl| Genome::from_record(&gl.genome.to_string()).map(|g| (gl.batch, g)).map_err(|e| e.to_string()));
        match parsed {
            Ok((batch, g)) => {
                if logs.batches.len() <= batch {
                    logs.batches.resize_with(batch + 1, Vec::new);
                }
                logs.batches[batch].push(g);
            }
            Err(err) => {
                log::warn!("genomes.jsonl line {}: skipped ({err})", i + 1);
                logs.skipped += 1;
            }
        }
    }
    Ok(logs)
}

/// Per batch: mean IS, best IS seen so far, and mean reward.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressionRow {
    pub batch: usize,
    pub mean_is: f64,
    pub best_so_far_is: f64,
    pub mean_reward: f64,
}

pub fn progression(evals: &[EvalLine]) -> Vec<ProgressionRow> {
    let n_batches = evals.iter().map(|e| e.batch + 1).max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for batch in 0..n_batches {
        let these: Vec<&EvalLine> = evals.iter().filter(|e| e.batch == batch).collect();
        if these.is_empty() {
            continue;
        }
        let n = these.len() as f64;
        for e in &these {
            best = best.max(e.report.is_mean);
        }
        rows.push(ProgressionRow {
            batch,
            mean_is: these.iter().map(|e| e.report.is_mean).sum::<f64>() / n,
            best_so_far_is: best,
            mean_reward: these.iter().map(|e| e.report.reward).sum::<f64>() / n,
        });
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub best_genome_id: String,
    pub best_is: f64,
    /// Batch in which the best genome first appeared.
    pub best_batch: usize,
    pub mean_is_per_batch: Vec<f64>,
    pub total_evaluations: usize,
    pub divergence_rate: f64,
    /// Sum of per-evaluation wall times, in seconds.
    pub wall_time: f64,
    pub skipped_lines: usize,
}

pub fn summarize(logs: &RunLogs) -> Option<RunSummary> {
    let first = logs.evals.first()?;
    let mut best = first;
    for e in &logs.evals {
        let r = &e.report;
        if r.is_mean > best.report.is_mean || (r.is_mean == best.report.is_mean && (e.batch, e.slot) < (best.batch, best.slot)) {
            best = e;
        }
    }
    let n = logs.evals.len();
    Some(RunSummary {
        best_genome_id: best.report.genome_id.clone(),
        best_is: best.report.is_mean,
        best_batch: best.batch,
        mean_is_per_batch: progression(&logs.evals).iter().map(|r| r.mean_is).collect(),
        total_evaluations: n,
        divergence_rate: logs.evals.iter().filter(|e| e.report.diverged).count() as f64 / n as f64,
        wall_time: logs.evals.iter().map(|e| e.report.wall_time).sum(),
        skipped_lines: logs.skipped,
    })
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "evaluations: {}", self.total_evaluations);
        let _ = writeln!(s, "batches: {}", self.mean_is_per_batch.len());
        let _ = writeln!(s, "best genome: {}", self.best_genome_id);
        let _ = writeln!(s, "best IS: {}", self.best_is);
        let _ = writeln!(s, "best found in batch: {}", self.best_batch);
        let _ = writeln!(s, "divergence rate: {}", self.divergence_rate);
        let _ = writeln!(s, "evaluation wall time (s): {:.3}", self.wall_time);
        let _ = writeln!(s, "skipped log lines: {}", self.skipped_lines);
        s
    }
}

/// Paths written by [`emit_report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub progression: PathBuf,
    pub op_frequencies: [PathBuf; 3],
    pub summary: PathBuf,
}

pub fn progression_csv(rows: &[ProgressionRow]) -> String {
    let mut s = String::from("batch,mean_is,best_so_far_is,mean_reward\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.batch, r.mean_is, r.best_so_far_is, r.mean_reward);
    }
    s
}

pub fn op_frequency_csv(batches: &[Vec<Genome>], kind: ModuleKind) -> String {
    let mut s = String::from("batch");
    for op in alphabet_of(kind) {
        let _ = write!(s, ",{}", op.name());
    }
    s.push('\n');
    for row in op_distribution_history(batches) {
        let _ = write!(s, "{}", row.batch);
        for f in row.segment(kind) {
            let _ = write!(s, ",{f}");
        }
        s.push('\n');
    }
    s
}

/// Writes `progression.csv`, `op_freq_{up,down,normal}.csv` and
/// `summary.txt` into `dir`.
pub fn emit_report(dir: &Path) -> Result<(RunSummary, ReportFiles), ReportError> {
    let logs = load_run(dir)?;
    let summary = summarize(&logs).ok_or_else(|| ReportError::NoData(dir.display().to_string()))?;
    let write = |name: &str, text: String| -> Result<PathBuf, ReportError> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io_err(&p))?;
        Ok(p)
    };
    let progression = write("progression.csv", progression_csv(&progression(&logs.evals)))?;
    let op_frequencies = [
        write("op_freq_up.csv", op_frequency_csv(&logs.batches, ModuleKind::Up))?,
        write("op_freq_down.csv", op_frequency_csv(&logs.batches, ModuleKind::Down))?,
        write("op_freq_normal.csv", op_frequency_csv(&logs.batches, ModuleKind::Normal))?,
    ];
    let summary_path = write("summary.txt", summary.to_text())?;
    Ok((
        summary,
        ReportFiles {
            progression,
            op_frequencies,
            summary: summary_path,
        },
    ))
}
