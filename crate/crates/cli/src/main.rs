use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ice_cli::config::ExperimentConfig;
use ice_cli::experiments::{run_ablation_ladder, sweep, write_ladder_csv, write_sweep_csv, SweepAxis};
use ice_cli::stats::trace_stats;
use ice_cli::suite::{read_baseline_calls, run_suite, write_summary_file, write_traces};
use ice_cli::tasks::{gen_tasks, read_tasks, write_tasks};
use ice_core::ChainArithTask;

#[derive(Parser)]
#[command(name = "ice", version, about = "Seeded experiments for early-exit masked diffusion decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a task file.
    GenTasks {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of tasks (overrides n_tasks).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one decoder over a task suite.
    Run {
        #[command(flatten)]
        io: SuiteArgs,
        /// Summary CSV of a baseline run for the speedup column.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Run the four-rung ablation ladder.
    Ladder {
        #[command(flatten)]
        io: SuiteArgs,
    },
    /// Sweep one axis over a list of values.
    Sweep {
        #[command(flatten)]
        io: SuiteArgs,
        /// n_thinking_steps, tau or allocation.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Confidence trajectories and jump histograms from stored traces.
    TraceStats {
        /// Directory of JSONL traces.
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = ice_core::DEFAULT_JUMP_DELTA)]
        delta: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Task file; sampled from the config when absent.
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-task JSONL traces.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Also write the resolved config next to the output.
    #[arg(long)]
    save_config: bool,
}

/// Flags that override values from `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    m_min: Option<String>,
    #[arg(long)]
    m_max: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    pad_variants: Option<String>,
    #[arg(long)]
    nt: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    /// uniform | front | back
    #[arg(long)]
    alloc: Option<String>,
    #[arg(long)]
    answer_len: Option<String>,
    /// vanilla | segment | structured | ice
    #[arg(long)]
    rung: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    /// confidence | stochastic
    #[arg(long)]
    selection: Option<String>,
    /// default | aggressive
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    /// sp | pp
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n_tasks: Option<String>,
    #[arg(long)]
    trace_positions: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    parallel: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in config {}", path.display()))?;
        }
        let flags = [
            ("seed", &self.seed),
            ("m_min", &self.m_min),
            ("m_max", &self.m_max),
            ("eps", &self.eps),
            ("pad_variants", &self.pad_variants),
            ("nt", &self.nt),
            ("budget", &self.budget),
            ("alloc", &self.alloc),
            ("answer_len", &self.answer_len),
            ("rung", &self.rung),
            ("steps", &self.steps),
            ("selection", &self.selection),
            ("schedule", &self.schedule),
            ("tau", &self.tau),
            ("mode", &self.mode),
            ("n_tasks", &self.n_tasks),
            ("trace_positions", &self.trace_positions),
            ("delta", &self.delta),
            ("parallel", &self.parallel),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl SuiteArgs {
    fn load(&self) -> Result<(ExperimentConfig, Vec<ChainArithTask>)> {
        let cfg = self.cfg.resolve()?;
        let tasks = match &self.tasks {
            Some(p) => read_tasks(p)?,
            None => gen_tasks(cfg.seed, cfg.n_tasks, cfg.m_min, cfg.m_max)?,
        };
        if self.save_config {
            let path = self.out.with_extension("cfg");
            fs::write(&path, cfg.to_text()).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok((cfg, tasks))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenTasks { cfg, n, out } => {
            let cfg = cfg.resolve()?;
            let tasks = gen_tasks(cfg.seed, n.unwrap_or(cfg.n_tasks), cfg.m_min, cfg.m_max)?;
            write_tasks(&out, &tasks)?;
        }
        Command::Run { io, baseline } => {
            let (cfg, tasks) = io.load()?;
            let mut report = run_suite(&cfg, &tasks)?;
            if let Some(b) = baseline {
                report = report.with_baseline(read_baseline_calls(&b)?);
            }
            write_summary_file(&report, &io.out)?;
            if let Some(dir) = &io.trace_dir {
                write_traces(&report, dir)?;
            }
            let a = &report.aggregate;
            eprintln!(
                "{} tasks, accuracy {:.4}, mean predictor calls {:.3}, errors {}",
                a.n_tasks, a.accuracy, a.mean_predictor_calls, a.n_errors
            );
        }
        Command::Ladder { io } => {
            let (cfg, tasks) = io.load()?;
            let ladder = run_ablation_ladder(&cfg, &tasks)?;
            write_ladder_csv(&ladder, create(&io.out)?)?;
            if let Some(dir) = &io.trace_dir {
                for (rung, rep) in &ladder.rungs {
                    write_traces(rep, &dir.join(rung.name()))?;
                }
            }
        }
        Command::Sweep { io, axis, values } => {
            let (cfg, tasks) = io.load()?;
            let report = sweep(&cfg, axis, &values, &tasks)?;
            write_sweep_csv(&report, create(&io.out)?)?;
            if let Some(dir) = &io.trace_dir {
                for p in &report.points {
                    write_traces(&p.report, &dir.join(format!("{}_{}", axis.name(), p.value)))?;
                }
            }
        }
        Command::TraceStats { traces, delta, out } => trace_stats(&traces, delta, &out)?,
    }
    Ok(())
}
