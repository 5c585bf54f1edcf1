//! The search loop, its run directory, and the random-search baseline.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, EvaluatorKind, SearchConfig};
use super::reinforce::reinforce_update;
use super::reward::{shape_reward, Baseline};
use crate::controller::{ControllerParams, SampleTrace};
use crate::eval::probe::ProbeError;
use crate::eval::{train_micro_gan, EvalContext, EvalReport, GanConfig, Surrogate};
use crate::par;
use crate::search_space::{random_genome_with, Genome};

/// Surrogate reward ceiling when the config leaves `is_max` unset.
pub const SURROGATE_IS_MAX: f64 = 11.24;

const RANDOM_SEARCH_SALT: u64 = 0x7a4d_5eed;

pub const HISTORY_HEADER: &str = "batch,mean_is,max_is,mean_reward,baseline,entropy";

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{0} already holds a run")]
    Exists(String),
    #[error("{path}: corrupt {what}: {message}")]
    Corrupt { path: String, what: &'static str, message: String },
    #[error("evaluation context: {0}")]
    Context(#[from] ProbeError),
    #[error("{0}")]
    Mismatch(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SearchError + '_ {
    move |source| SearchError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Files of one run.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }
    pub fn genomes(&self) -> PathBuf {
        self.root.join("genomes.jsonl")
    }
    pub fn evals(&self) -> PathBuf {
        self.root.join("evals.jsonl")
    }
    pub fn history(&self) -> PathBuf {
        self.root.join("history.csv")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("checkpoint.json")
    }
    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }
    pub fn context(&self) -> PathBuf {
        self.root.join("context.json")
    }

    fn append(&self, path: &Path, text: &str) -> Result<(), SearchError> {
        let mut f = OpenOptions::new().append(true).create(true).open(path).map_err(io_err(path))?;
        f.write_all(text.as_bytes()).map_err(io_err(path))
    }

    fn len(path: &Path) -> Result<u64, SearchError> {
        match fs::metadata(path) {
            Ok(m) => Ok(m.len()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    fn truncate(path: &Path, len: u64) -> Result<(), SearchError> {
        let f = OpenOptions::new().write(true).create(true).truncate(false).open(path).map_err(io_err(path))?;
        f.set_len(len).map_err(io_err(path))
    }
}

/// Scores genomes for the search loop. Implementations must be
/// deterministic in `(genome, seed)`.
pub trait GenomeEvaluator: Send + Sync {
    fn evaluate(&self, genome: &Genome, seed: u64, is_bounds: (f64, f64)) -> Result<EvalReport, String>;
    /// Upper reward bound used when the config does not set one.
    fn default_is_max(&self) -> f64;
}

impl GenomeEvaluator for Surrogate {
    fn evaluate(&self, genome: &Genome, _seed: u64, is_bounds: (f64, f64)) -> Result<EvalReport, String> {
        Ok(Surrogate::evaluate(self, genome, is_bounds))
    }

    fn default_is_max(&self) -> f64 {
        self.is_max
    }
}

/// Trains a micro-GAN per genome against a shared, frozen context.
#[derive(Debug, Clone)]
pub struct MicroGanEvaluator {
    pub ctx: Arc<EvalContext>,
    pub cfg: GanConfig,
}

impl GenomeEvaluator for MicroGanEvaluator {
    fn evaluate(&self, genome: &Genome, seed: u64, is_bounds: (f64, f64)) -> Result<EvalReport, String> {
        train_micro_gan(genome, &self.cfg, &self.ctx, seed, is_bounds).map_err(|e| e.to_string())
    }

    fn default_is_max(&self) -> f64 {
        self.ctx.real_is
    }
}

/// Hashes identifying the dataset and probe of a micro-GAN run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub size: usize,
    pub seed: u64,
    pub train_hash: String,
    pub heldout_hash: String,
    pub probe_hash: String,
    pub probe_accuracy: f64,
    pub real_is: f64,
}

impl ContextRecord {
    pub fn of(ctx: &EvalContext, seed: u64) -> Self {
        Self {
            size: ctx.train.size,
            seed,
            train_hash: ctx.train.content_hash(),
            heldout_hash: ctx.heldout.content_hash(),
            probe_hash: ctx.probe.content_hash(),
            probe_accuracy: ctx.probe.accuracy,
            real_is: ctx.real_is,
        }
    }
}

pub fn build_context(cfg: &SearchConfig) -> Result<(EvalContext, ContextRecord), SearchError> {
    let size = cfg.gan.generator.base_size << cfg.gan.generator.n_up_modules;
    let seed = cfg.data.seed.unwrap_or(cfg.seed);
    let ctx = EvalContext::build_with(cfg.data.per_class_train, cfg.data.per_class_heldout, size, seed)?;
    let rec = ContextRecord::of(&ctx, seed);
    Ok((ctx, rec))
}

/// The evaluator named by `cfg`, plus its context record for micro-GAN runs.
pub fn evaluator_for(cfg: &SearchConfig) -> Result<(Box<dyn GenomeEvaluator>, Option<ContextRecord>), SearchError> {
    Ok(match cfg.evaluator {
        EvaluatorKind::Surrogate => {
            let is_max = cfg.is_max.unwrap_or(SURROGATE_IS_MAX);
            (Box::new(Surrogate::new(is_max, cfg.surrogate.lambda)), None)
        }
        EvaluatorKind::MicroGan => {
            let (ctx, rec) = build_context(cfg)?;
            log::info!("probe accuracy {:.4}, real-data IS {:.4}", rec.probe_accuracy, rec.real_is);
            let ev = MicroGanEvaluator {
                ctx: Arc::new(ctx),
                cfg: cfg.gan,
            };
            (Box::new(ev), Some(rec))
        }
    })
}

/// One line of `genomes.jsonl`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenomeLine {
    pub batch: usize,
    pub slot: usize,
    pub log_prob: Option<f64>,
    pub genome: serde_json::Value,
}

/// One line of `evals.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLine {
    pub batch: usize,
    pub slot: usize,
    pub attempts: usize,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// One row of `history.csv`. `baseline` and `entropy` are empty for
/// random search.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub batch: usize,
    pub mean_is: f64,
    pub max_is: f64,
    pub mean_reward: f64,
    pub baseline: Option<f64>,
    pub entropy: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl HistoryRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}\n",
            self.batch,
            self.mean_is,
            self.max_is,
            self.mean_reward,
            opt(self.baseline),
            opt(self.entropy)
        )
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 6 {
            return None;
        }
        let o = |s: &str| if s.is_empty() { Some(None) } else { s.parse().ok().map(Some) };
        Some(Self {
            batch: f[0].parse().ok()?,
            mean_is: f[1].parse().ok()?,
            max_is: f[2].parse().ok()?,
            mean_reward: f[3].parse().ok()?,
            baseline: o(f[4])?,
            entropy: o(f[5])?,
        })
    }
}

/// Byte lengths of the append-only logs at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogOffsets {
    pub genomes: u64,
    pub evals: u64,
    pub history: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub batches_done: usize,
    pub controller: ControllerParams,
    pub baseline: Baseline,
    pub offsets: LogOffsets,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOptions {
    /// Stop before this batch index, as if interrupted.
    pub stop_before_batch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub dir: RunDir,
    pub controller: ControllerParams,
    pub baseline: Baseline,
    pub batches_done: usize,
    pub updates_applied: usize,
    pub history: Vec<HistoryRow>,
    pub complete: bool,
}

/// Seed of evaluation `run` of slot `slot` in batch `batch`.
pub fn job_seed(seed: u64, batch: usize, slot: usize, run: usize) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [batch as u64, slot as u64, run as u64] {
        x = (x ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

fn batch_rng(seed: u64, batch: usize, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(batch as u64);
    rng
}

fn diverged_report(genome: &Genome) -> EvalReport {
    EvalReport {
        genome_id: genome.id().to_string(),
        is_mean: 1.0,
        is_std: 0.0,
        fid: None,
        reward: 0.0,
        param_count: 0,
        steps_trained: 0,
        diverged: true,
        wall_time: 0.0,
    }
}

/// Evaluates with one retry after a crash or error; a second failure is
/// scored as divergence. Returns the report and the attempt count.
fn evaluate_guarded(ev: &dyn GenomeEvaluator, genome: &Genome, seed: u64, bounds: (f64, f64)) -> (EvalReport, usize) {
    for attempt in 1..=2 {
        match catch_unwind(AssertUnwindSafe(|| ev.evaluate(genome, seed, bounds))) {
            Ok(Ok(r)) => return (r, attempt),
            Ok(Err(e)) => log::warn!("evaluation of {} failed (attempt {attempt}): {e}", genome.id()),
            Err(_) => log::warn!("worker crashed evaluating {} (attempt {attempt})", genome.id()),
        }
    }
    (diverged_report(genome), 2)
}

/// Averages `runs` independent evaluations of one genome.
fn evaluate_runs(ev: &dyn GenomeEvaluator, genome: &Genome, seeds: &[u64], bounds: (f64, f64)) -> (EvalReport, usize) {
    let results: Vec<(EvalReport, usize)> = seeds.iter().map(|&s| evaluate_guarded(ev, genome, s, bounds)).collect();
    if results.len() == 1 {
        return results.into_iter().next().expect("one run");
    }
    let n = results.len() as f64;
    let attempts = results.iter().map(|r| r.1).max().unwrap_or(1);
    let reports: Vec<&EvalReport> = results.iter().map(|r| &r.0).collect();
    let is_mean = reports.iter().map(|r| r.is_mean).sum::<f64>() / n;
    let fids: Vec<f64> = reports.iter().filter_map(|r| r.fid).collect();
    let diverged = reports.iter().all(|r| r.diverged);
    let report = EvalReport {
        genome_id: genome.id().to_string(),
        is_mean,
        is_std: (reports.iter().map(|r| (r.is_mean - is_mean).powi(2)).sum::<f64>() / n).sqrt(),
        fid: (!fids.is_empty()).then(|| fids.iter().sum::<f64>() / fids.len() as f64),
        reward: if diverged { 0.0 } else { shape_reward(is_mean, bounds.0, bounds.1) },
        param_count: reports[0].param_count,
        steps_trained: reports.iter().map(|r| r.steps_trained).min().unwrap_or(0),
        diverged,
        wall_time: reports.iter().map(|r| r.wall_time).sum(),
    };
    (report, attempts)
}

/// Evaluates a batch on `cfg.workers` workers; results come back in slot order.
pub fn evaluate_batch(
    ev: &dyn GenomeEvaluator,
    genomes: &[Genome],
    cfg: &SearchConfig,
    batch: usize,
    bounds: (f64, f64),
) -> Vec<(EvalReport, usize)> {
    let jobs: Vec<(usize, &Genome)> = genomes.iter().enumerate().collect();
    par::with_workers(cfg.workers, || {
        par::map(&jobs, |&(slot, g)| {
            let seeds: Vec<u64> = (0..cfg.runs_per_genome).map(|r| job_seed(cfg.seed, batch, slot, r)).collect();
            evaluate_runs(ev, g, &seeds, bounds)
        })
    })
}

pub fn reward_bounds(cfg: &SearchConfig, ev: &dyn GenomeEvaluator) -> Result<(f64, f64), SearchError> {
    let max = cfg.is_max.unwrap_or_else(|| ev.default_is_max());
    if !(max > cfg.is_min) {
        return Err(SearchError::Mismatch(format!("reward bounds ({}, {max}) are empty", cfg.is_min)));
    }
    Ok((cfg.is_min, max))
}

fn genome_json(g: &Genome) -> serde_json::Value {
    serde_json::from_str(&g.to_record()).expect("genome record is JSON")
}

fn batch_text(batch: usize, genomes: &[Genome], traces: Option<&[SampleTrace]>, reports: &[(EvalReport, usize)]) -> (String, String) {
    let mut gl = String::new();
    let mut el = String::new();
    for (slot, (g, (r, attempts))) in genomes.iter().zip(reports).enumerate() {
        let line = GenomeLine {
            batch,
            slot,
            log_prob: traces.map(|t| t[slot].total_log_prob),
            genome: genome_json(g),
        };
        gl.push_str(&serde_json::to_string(&line).expect("genome line serializes"));
        gl.push('\n');
        let line = EvalLine {
            batch,
            slot,
            attempts: *attempts,
            report: r.clone(),
        };
        el.push_str(&serde_json::to_string(&line).expect("eval line serializes"));
        el.push('\n');
    }
    (gl, el)
}

fn batch_stats(reports: &[(EvalReport, usize)]) -> (f64, f64, f64) {
    let n = reports.len() as f64;
    let mean_is = reports.iter().map(|r| r.0.is_mean).sum::<f64>() / n;
    let max_is = reports.iter().map(|r| r.0.is_mean).fold(f64::NEG_INFINITY, f64::max);
    let mean_reward = reports.iter().map(|r| r.0.reward).sum::<f64>() / n;
    (mean_is, max_is, mean_reward)
}

fn prepare_dir(dir: &RunDir, cfg: &SearchConfig) -> Result<(), SearchError> {
    if dir.config().exists() {
        return Err(SearchError::Exists(dir.root.display().to_string()));
    }
    fs::create_dir_all(dir.checkpoints()).map_err(io_err(&dir.root))?;
    fs::write(dir.config(), cfg.to_toml()).map_err(io_err(&dir.config()))?;
    for p in [dir.genomes(), dir.evals()] {
        fs::write(&p, "").map_err(io_err(&p))?;
    }
    fs::write(dir.history(), format!("{HISTORY_HEADER}\n")).map_err(io_err(&dir.history()))
}

fn write_checkpoint(dir: &RunDir, ck: &Checkpoint) -> Result<(), SearchError> {
    let text = serde_json::to_string(ck).expect("checkpoint serializes");
    let tmp = dir.root.join("checkpoint.json.tmp");
    fs::write(&tmp, &text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, dir.checkpoint()).map_err(io_err(&dir.checkpoint()))?;
    let copy = dir.checkpoints().join(format!("ckpt_{:05}.json", ck.batches_done));
    fs::write(&copy, &text).map_err(io_err(&copy))
}

pub fn read_checkpoint(dir: &RunDir) -> Result<Checkpoint, SearchError> {
    let path = dir.checkpoint();
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| SearchError::Corrupt {
        path: path.display().to_string(),
        what: "checkpoint",
        message: e.to_string(),
    })
}

fn offsets(dir: &RunDir) -> Result<LogOffsets, SearchError> {
    Ok(LogOffsets {
        genomes: RunDir::len(&dir.genomes())?,
        evals: RunDir::len(&dir.evals())?,
        history: RunDir::len(&dir.history())?,
    })
}

struct LoopState {
    controller: ControllerParams,
    baseline: Baseline,
    next_batch: usize,
}

fn drive(
    cfg: &SearchConfig,
    dir: &RunDir,
    ev: &dyn GenomeEvaluator,
    mut st: LoopState,
    opts: SearchOptions,
) -> Result<SearchOutcome, SearchError> {
    let bounds = reward_bounds(cfg, ev)?;
    let mut history = Vec::new();
    let mut applied = 0;
    let total = cfg.updates();
    let mut batch = st.next_batch;
    while batch < total {
        if opts.stop_before_batch.is_some_and(|s| batch >= s) {
            break;
        }
        let snapshot = st.controller.clone();
        let mut rng = batch_rng(cfg.seed, batch, 0);
        let traces: Vec<SampleTrace> = (0..cfg.batch_size).map(|_| snapshot.sample(&mut rng)).collect();
        let genomes: Vec<Genome> = traces.iter().map(|t| t.genome.clone()).collect();
        let reports = evaluate_batch(ev, &genomes, cfg, batch, bounds);
        let rewards: Vec<f64> = reports.iter().map(|r| r.0.reward).collect();
        let (mean_is, max_is, mean_reward) = batch_stats(&reports);
        let b = st.baseline.current(mean_reward);
        match reinforce_update(&mut st.controller, &traces, &rewards, b, cfg.lr, cfg.entropy_coef) {
            Ok(s) => {
                applied += 1;
                log::debug!("batch {batch}: gradient norm {:.4e}", s.grad_norm);
            }
            Err(e) => log::warn!("batch {batch}: controller update skipped: {e}"),
        }
        st.baseline.update(mean_reward);
        let entropy = traces.iter().map(|t| t.total_entropy).sum::<f64>() / traces.len() as f64;
        let row = HistoryRow {
            batch,
            mean_is,
            max_is,
            mean_reward,
            baseline: st.baseline.value,
            entropy: Some(entropy),
        };
        log::info!("batch {batch}: mean IS {mean_is:.4}, max IS {max_is:.4}, mean reward {mean_reward:.4}");
        let (gl, el) = batch_text(batch, &genomes, Some(&traces), &reports);
        dir.append(&dir.genomes(), &gl)?;
        dir.append(&dir.evals(), &el)?;
        dir.append(&dir.history(), &row.to_csv())?;
        history.push(row);
        batch += 1;
        if batch.is_multiple_of(cfg.checkpoint_every) || batch == total {
            write_checkpoint(
                dir,
                &Checkpoint {
                    batches_done: batch,
                    controller: st.controller.clone(),
                    baseline: st.baseline,
                    offsets: offsets(dir)?,
                },
            )?;
        }
    }
    Ok(SearchOutcome {
        dir: dir.clone(),
        controller: st.controller,
        baseline: st.baseline,
        batches_done: batch,
        updates_applied: applied,
        history,
        complete: batch == total,
    })
}

fn write_context(dir: &RunDir, rec: &Option<ContextRecord>) -> Result<(), SearchError> {
    if let Some(rec) = rec {
        let text = serde_json::to_string_pretty(rec).expect("context serializes");
        fs::write(dir.context(), text).map_err(io_err(&dir.context()))?;
    }
    Ok(())
}

/// Starts a fresh search in `dir` with the evaluator named by `cfg`.
pub fn run_search(cfg: &SearchConfig, dir: &Path) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    let (ev, rec) = evaluator_for(cfg)?;
    let dir = RunDir::new(dir);
    prepare_dir(&dir, cfg)?;
    write_context(&dir, &rec)?;
    run_prepared(cfg, &dir, ev.as_ref(), SearchOptions::default())
}

/// Starts a fresh search with a caller-supplied evaluator.
pub fn run_search_with(cfg: &SearchConfig, dir: &Path, ev: &dyn GenomeEvaluator, opts: SearchOptions) -> Result<SearchOutcome, SearchError> {
    cfg.validate()?;
    let dir = RunDir::new(dir);
    prepare_dir(&dir, cfg)?;
    run_prepared(cfg, &dir, ev, opts)
}

fn run_prepared(cfg: &SearchConfig, dir: &RunDir, ev: &dyn GenomeEvaluator, opts: SearchOptions) -> Result<SearchOutcome, SearchError> {
    let st = LoopState {
        controller: ControllerParams::init(cfg.controller, cfg.seed),
        baseline: Baseline::new(cfg.baseline_decay),
        next_batch: 0,
    };
    drive(cfg, dir, ev, st, opts)
}

/// Loads `dir`'s config and checkpoint, trims logs written after the
/// checkpoint, and continues with a caller-supplied evaluator.
pub fn resume_with(dir: &Path, ev: &dyn GenomeEvaluator, opts: SearchOptions) -> Result<SearchOutcome, SearchError> {
    let dir = RunDir::new(dir);
    let cfg = super::config::parse_config(&dir.config())?;
    resume_prepared(&cfg, &dir, ev, opts)
}

fn resume_prepared(cfg: &SearchConfig, dir: &RunDir, ev: &dyn GenomeEvaluator, opts: SearchOptions) -> Result<SearchOutcome, SearchError> {
    let st = if dir.checkpoint().exists() {
        let ck = read_checkpoint(dir)?;
        ck.controller.check_layout().map_err(|e| SearchError::Corrupt {
            path: dir.checkpoint().display().to_string(),
            what: "checkpoint",
            message: e.to_string(),
        })?;
        RunDir::truncate(&dir.genomes(), ck.offsets.genomes)?;
        RunDir::truncate(&dir.evals(), ck.offsets.evals)?;
        RunDir::truncate(&dir.history(), ck.offsets.history)?;
        LoopState {
            controller: ck.controller,
            baseline: ck.baseline,
            next_batch: ck.batches_done,
        }
    } else {
        for p in [dir.genomes(), dir.evals()] {
            RunDir::truncate(&p, 0)?;
        }
        fs::write(dir.history(), format!("{HISTORY_HEADER}\n")).map_err(io_err(&dir.history()))?;
        LoopState {
            controller: ControllerParams::init(cfg.controller, cfg.seed),
            baseline: Baseline::new(cfg.baseline_decay),
            next_batch: 0,
        }
    };
    log::info!("resuming {} at batch {}", dir.root.display(), st.next_batch);
    drive(cfg, dir, ev, st, opts)
}

/// Continues an interrupted run with the evaluator named by its config.
/// Micro-GAN runs must rebuild a context with the recorded hashes.
pub fn resume(dir: &Path) -> Result<SearchOutcome, SearchError> {
    let rd = RunDir::new(dir);
    let cfg = super::config::parse_config(&rd.config())?;
    let (ev, rec) = evaluator_for(&cfg)?;
    if let Some(rec) = rec {
        let path = rd.context();
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let saved: ContextRecord = serde_json::from_str(&text).map_err(|e| SearchError::Corrupt {
            path: path.display().to_string(),
            what: "context record",
            message: e.to_string(),
        })?;
        if saved != rec {
            return Err(SearchError::Mismatch(format!(
                "rebuilt dataset/probe do not match {} (train hash {} vs {})",
                path.display(),
                rec.train_hash,
                saved.train_hash
            )));
        }
    }
    resume_prepared(&cfg, &rd, ev.as_ref(), SearchOptions::default())
}

/// Summary of a random-search run.
#[derive(Debug, Clone)]
pub struct RandomOutcome {
    pub dir: RunDir,
    pub history: Vec<HistoryRow>,
    /// Mean shaped reward over every evaluated genome.
    pub mean_reward: f64,
}

/// Uniformly random genomes under the same budget, batching, and
/// evaluator, logged in the same layout (without controller columns).
pub fn run_random_baseline_with(cfg: &SearchConfig, dir: &Path, ev: &dyn GenomeEvaluator) -> Result<RandomOutcome, SearchError> {
    cfg.validate()?;
    let dir = RunDir::new(dir);
    prepare_dir(&dir, cfg)?;
    let bounds = reward_bounds(cfg, ev)?;
    let mut history = Vec::new();
    let mut total_reward = 0.0;
    for batch in 0..cfg.updates() {
        let mut rng = batch_rng(cfg.seed, batch, RANDOM_SEARCH_SALT);
        let genomes: Vec<Genome> = (0..cfg.batch_size).map(|_| random_genome_with(&mut rng)).collect();
        let reports = evaluate_batch(ev, &genomes, cfg, batch, bounds);
        let (mean_is, max_is, mean_reward) = batch_stats(&reports);
        total_reward += reports.iter().map(|r| r.0.reward).sum::<f64>();
        let row = HistoryRow {
            batch,
            mean_is,
            max_is,
            mean_reward,
            baseline: None,
            entropy: None,
        };
        let (gl, el) = batch_text(batch, &genomes, None, &reports);
        dir.append(&dir.genomes(), &gl)?;
        dir.append(&dir.evals(), &el)?;
        dir.append(&dir.history(), &row.to_csv())?;
        history.push(row);
    }
    Ok(RandomOutcome {
        dir,
        history,
        mean_reward: total_reward / cfg.budget as f64,
    })
}

pub fn run_random_baseline(cfg: &SearchConfig, dir: &Path) -> Result<RandomOutcome, SearchError> {
    let (ev, rec) = evaluator_for(cfg)?;
    let out = run_random_baseline_with(cfg, dir, ev.as_ref())?;
    write_context(&out.dir, &rec)?;
    Ok(out)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>, SearchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            HistoryRow::from_csv(l).ok_or_else(|| SearchError::Corrupt {
                path: path.display().to_string(),
                what: "history row",
                message: l.to_string(),
            })
        })
        .collect()
}
