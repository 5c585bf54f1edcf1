use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gansearch::eval::{EvalReport, GanConfig};
use gansearch::graph::{assemble_discriminator, assemble_generator, count_params, decode_program, DiscriminatorConfig, GeneratorConfig};
use gansearch::report::{emit_report, ReportError};
use gansearch::search::{
    evaluator_for, parse_config, resume, run_random_baseline, run_search, ConfigError, EvaluatorKind, SearchConfig, SearchError,
};
use gansearch::search_space::{Genome, ModuleKind};

#[derive(Parser)]
#[command(name = "gansearch", version, about = "Architecture search for GAN building blocks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a REINFORCE search.
    Search {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (default: runs/<evaluator>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue an interrupted search from its last checkpoint.
    Resume { run_dir: PathBuf },
    /// Write progression, operation-frequency, and summary files for a run.
    Report { run_dir: PathBuf },
    /// Random search under the same budget and evaluator.
    BaselineRandom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a single genome and print its report as JSON.
    Eval {
        #[arg(long)]
        genome: PathBuf,
        /// Search config supplying evaluator settings; desk defaults otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        evaluator: Option<EvaluatorArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the decoded modules of a genome and its parameter counts.
    Decode {
        #[arg(long)]
        genome: PathBuf,
        /// Emit a JSON dump (module DAGs, desk graphs with shapes, parameter counts).
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorArg {
    Surrogate,
    MicroGan,
}

struct CliError {
    code: &'static str,
    message: String,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Io { .. } => "E_IO",
            _ => "E_CONFIG",
        };
        Self::new(code, e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        let code = match &e {
            SearchError::Config(ConfigError::Io { .. }) | SearchError::Io { .. } => "E_IO",
            SearchError::Config(_) => "E_CONFIG",
            SearchError::Exists(_) => "E_RUN_EXISTS",
            SearchError::Corrupt { .. } => "E_CORRUPT",
            SearchError::Context(_) => "E_PROBE",
            SearchError::Mismatch(_) => "E_MISMATCH",
        };
        Self::new(code, e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        let code = match e {
            ReportError::NoData(_) => "E_NO_DATA",
            ReportError::Io { .. } => "E_IO",
        };
        Self::new(code, e.to_string())
    }
}

fn default_dir(cfg: &SearchConfig, prefix: &str) -> PathBuf {
    let ev = match cfg.evaluator {
        EvaluatorKind::Surrogate => "surrogate",
        EvaluatorKind::MicroGan => "micro-gan",
    };
    PathBuf::from("runs").join(format!("{prefix}{ev}-seed{}", cfg.seed))
}

fn read_genome(path: &Path) -> Result<Genome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new("E_IO", format!("{}: {e}", path.display())))?;
    Genome::from_record(&text).map_err(|e| CliError::new("E_GENOME", format!("{}: {e}", path.display())))
}

fn print_report(r: &EvalReport) {
    println!("{}", serde_json::to_string_pretty(r).expect("report serializes"));
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Search { config, out } => {
            let cfg = parse_config(&config)?;
            let dir = out.unwrap_or_else(|| default_dir(&cfg, ""));
            let outcome = run_search(&cfg, &dir)?;
            let last = outcome.history.last().map(|r| r.mean_reward).unwrap_or(f64::NAN);
            println!("{}: {} updates, final mean reward {last}", dir.display(), outcome.updates_applied);
        }
        Command::Resume { run_dir } => {
            let outcome = resume(&run_dir)?;
            println!("{}: resumed through batch {}", run_dir.display(), outcome.batches_done);
        }
        Command::Report { run_dir } => {
            let (summary, files) = emit_report(&run_dir)?;
            print!("{}", summary.to_text());
            println!("wrote {}", files.progression.display());
        }
        Command::BaselineRandom { config, out } => {
            let cfg = parse_config(&config)?;
            let dir = out.unwrap_or_else(|| default_dir(&cfg, "random-"));
            let outcome = run_random_baseline(&cfg, &dir)?;
            println!("{}: mean reward {}", dir.display(), outcome.mean_reward);
        }
        Command::Eval {
            genome,
            config,
            evaluator,
            seed,
        } => {
            let g = read_genome(&genome)?;
            let mut cfg = match config {
                Some(p) => parse_config(&p)?,
                None => SearchConfig::new(seed, 10, EvaluatorKind::MicroGan),
            };
            match evaluator {
                Some(EvaluatorArg::Surrogate) => cfg.evaluator = EvaluatorKind::Surrogate,
                Some(EvaluatorArg::MicroGan) => cfg.evaluator = EvaluatorKind::MicroGan,
                None => {}
            }
            let (ev, _) = evaluator_for(&cfg)?;
            let bounds = gansearch::search::reward_bounds(&cfg, ev.as_ref())?;
            let report = ev.evaluate(&g, seed, bounds).map_err(|e| CliError::new("E_BUILD", e))?;
            print_report(&report);
        }
        Command::Decode { genome, json } => {
            let g = read_genome(&genome)?;
            let build = |e: gansearch::graph::BuildError| CliError::new("E_BUILD", e.to_string());
            let mut dags = Vec::new();
            for (kind, pre) in [
                (ModuleKind::Up, None),
                (ModuleKind::Down, None),
                (ModuleKind::Normal, Some(ModuleKind::Down)),
            ] {
                dags.push(decode_program(g.program(kind), pre).map_err(build)?);
            }
            let gan = GanConfig::desk();
            let (gc, dc): (GeneratorConfig, DiscriminatorConfig) = (gan.generator, gan.discriminator);
            let gi = assemble_generator(&g, &gc).map_err(build)?;
            let di = assemble_discriminator(&g, &dc).map_err(build)?;
            if json {
                let dump = serde_json::json!({
                    "id": g.id(),
                    "modules": dags,
                    "generator": { "params": count_params(&gi), "graph": gi },
                    "discriminator": { "params": count_params(&di), "graph": di },
                });
                println!("{}", serde_json::to_string_pretty(&dump).expect("dump serializes"));
            } else {
                println!("genome {}", g.id());
                for dag in &dags {
                    print!("{dag}");
                }
                println!("generator parameters (desk): {}", count_params(&gi));
                println!("discriminator parameters (desk): {}", count_params(&di));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let text = e.message.replace('\n', " ");
            eprintln!("error[{}]: {text}", e.code);
            ExitCode::from(1)
        }
    }
}
