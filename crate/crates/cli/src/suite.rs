//! Running a decoder over a task suite and reporting per-task rows.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use ice_core::{
    build_layout, decode_ice, decode_sectioned, decode_vanilla, CandidateOptions, ChainArithTask, DecodeOutcome,
    DecodeRung, ExitReason, IceError, LayoutRung, Mode, OraclePredictor, Phase, SectionKind, SequenceState, Trace,
};

use crate::config::{mode_name, ExperimentConfig};
use crate::tasks::task_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub task_id: usize,
    pub rung: DecodeRung,
    pub mode: Option<Mode>,
    pub correct: bool,
    pub answer: Option<u8>,
    pub expected: u8,
    pub steps_used: usize,
    pub predictor_calls: usize,
    pub exit_step: Option<usize>,
    pub exit_reason: Option<ExitReason>,
    pub final_avg_answer_conf: Option<f64>,
    pub error_kind: Option<&'static str>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub n_tasks: usize,
    pub n_errors: usize,
    pub layout_errors: usize,
    /// Fraction of rows marked correct; failed rows count as incorrect.
    pub accuracy: f64,
    /// Mean over rows that completed.
    pub mean_predictor_calls: f64,
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub rows: Vec<RunSummary>,
    pub traces: Vec<Option<Trace>>,
    pub aggregate: Aggregate,
}

pub fn error_kind(e: &IceError) -> &'static str {
    match e {
        IceError::InvalidLayout(_) => "invalid_layout",
        IceError::InvalidBudget { .. } => "invalid_budget",
        IceError::InvalidInput(_) => "invalid_input",
        IceError::Domain { .. } => "domain",
        IceError::Shape { .. } => "shape",
        IceError::InconsistentState => "inconsistent_state",
        IceError::LayoutIncompatible(_) => "layout_incompatible",
        IceError::UndefinedConfidence => "undefined_confidence",
        IceError::Precondition(_) => "precondition",
        IceError::Parse(_) => "parse",
    }
}

fn is_layout_error(kind: &str) -> bool {
    matches!(kind, "layout_incompatible" | "invalid_layout" | "invalid_budget")
}

/// The decoded answer digit: the first answer position for sectioned
/// layouts, the last digit of the generation span otherwise.
pub fn extract_answer(state: &SequenceState) -> Option<u8> {
    match state.rung() {
        LayoutRung::Vanilla => state
            .positions_where(|k| k == SectionKind::Generation)
            .into_iter()
            .rev()
            .find_map(|p| state.tokens()[p].as_digit()),
        _ => {
            let first = *state.positions_where(|k| k == SectionKind::Answer).first()?;
            state.tokens()[first].as_digit()
        }
    }
}

struct TaskRun {
    summary: RunSummary,
    trace: Option<Trace>,
}

struct Decoded {
    outcome: DecodeOutcome,
    exit_step: Option<usize>,
    exit_reason: Option<ExitReason>,
    final_conf: Option<f64>,
}

fn decode_task(
    config: &ExperimentConfig,
    rung: DecodeRung,
    task: &ChainArithTask,
    seed: u64,
) -> ice_core::Result<Decoded> {
    let spec = config.layout_spec(rung);
    let predictor =
        OraclePredictor::for_task(task, &spec, config.eps, CandidateOptions { pad_variants: config.pad_variants })?;
    let state = build_layout(&task.prompt_tokens(), &spec)?;
    let dc = config.decode_config(rung, seed);
    let last_monitored = |o: &DecodeOutcome| {
        o.trace.records.iter().rev().filter(|r| r.phase != Phase::AnswerGeneration).find_map(|r| r.avg_answer_conf)
    };
    Ok(match rung {
        DecodeRung::Vanilla => {
            let outcome = decode_vanilla(&state, &dc, &predictor)?;
            Decoded { final_conf: last_monitored(&outcome), outcome, exit_step: None, exit_reason: None }
        }
        DecodeRung::Segment | DecodeRung::Structured => {
            let outcome = decode_sectioned(&state, &dc, &predictor)?;
            Decoded { final_conf: last_monitored(&outcome), outcome, exit_step: None, exit_reason: None }
        }
        DecodeRung::Ice => {
            let out = decode_ice(&state, &dc, &predictor)?;
            Decoded {
                outcome: out.decode,
                exit_step: out.phase.exit_step,
                exit_reason: Some(out.phase.exit_reason),
                final_conf: Some(out.phase.final_confidence),
            }
        }
    })
}

fn run_task(config: &ExperimentConfig, rung: DecodeRung, task_id: usize, task: &ChainArithTask) -> TaskRun {
    let expected = task.answer();
    let mode = if rung == DecodeRung::Ice { config.mode } else { None };
    let mut summary = RunSummary {
        task_id,
        rung,
        mode,
        correct: false,
        answer: None,
        expected,
        steps_used: 0,
        predictor_calls: 0,
        exit_step: None,
        exit_reason: None,
        final_avg_answer_conf: None,
        error_kind: None,
        error: None,
    };
    match decode_task(config, rung, task, task_seed(config.seed, task_id)) {
        Ok(d) => {
            let answer = extract_answer(&d.outcome.state);
            summary.correct = answer == Some(expected);
            summary.answer = answer;
            summary.steps_used = d.outcome.steps_used;
            summary.predictor_calls = d.outcome.predictor_calls;
            summary.exit_step = d.exit_step;
            summary.exit_reason = d.exit_reason;
            summary.final_avg_answer_conf = d.final_conf;
            TaskRun { summary, trace: Some(d.outcome.trace) }
        }
        Err(e) => {
            summary.error_kind = Some(error_kind(&e));
            summary.error = Some(e.to_string());
            TaskRun { summary, trace: None }
        }
    }
}

pub fn aggregate(rows: &[RunSummary], baseline_calls: Option<f64>) -> Aggregate {
    let n = rows.len();
    let n_errors = rows.iter().filter(|r| r.error.is_some()).count();
    let layout_errors = rows.iter().filter(|r| r.error_kind.is_some_and(is_layout_error)).count();
    let correct = rows.iter().filter(|r| r.correct).count();
    let done: Vec<f64> = rows.iter().filter(|r| r.error.is_none()).map(|r| r.predictor_calls as f64).collect();
    let mean_predictor_calls = if done.is_empty() { f64::NAN } else { done.iter().sum::<f64>() / done.len() as f64 };
    Aggregate {
        n_tasks: n,
        n_errors,
        layout_errors,
        accuracy: if n == 0 { f64::NAN } else { correct as f64 / n as f64 },
        mean_predictor_calls,
        speedup: baseline_calls.map(|b| b / mean_predictor_calls),
    }
}

/// Runs `rung` over every task. Failures land in the row's error columns.
pub fn run_suite_rung(config: &ExperimentConfig, rung: DecodeRung, tasks: &[ChainArithTask]) -> SuiteReport {
    let runs: Vec<TaskRun> = if config.parallel {
        tasks.par_iter().enumerate().map(|(i, t)| run_task(config, rung, i, t)).collect()
    } else {
        tasks.iter().enumerate().map(|(i, t)| run_task(config, rung, i, t)).collect()
    };
    let (rows, traces): (Vec<_>, Vec<_>) = runs.into_iter().map(|r| (r.summary, r.trace)).unzip();
    let aggregate = aggregate(&rows, None);
    SuiteReport { rows, traces, aggregate }
}

pub fn run_suite(config: &ExperimentConfig, tasks: &[ChainArithTask]) -> Result<SuiteReport> {
    config.validate()?;
    Ok(run_suite_rung(config, config.rung, tasks))
}

impl SuiteReport {
    pub fn with_baseline(mut self, baseline_calls: f64) -> Self {
        self.aggregate.speedup = Some(baseline_calls / self.aggregate.mean_predictor_calls);
        self
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn exit_reason_name(r: ExitReason) -> &'static str {
    match r {
        ExitReason::Threshold => "threshold",
        ExitReason::Exhausted => "exhausted",
    }
}

pub const SUMMARY_HEADER: [&str; 16] = [
    "task_id",
    "rung",
    "mode",
    "correct",
    "answer",
    "expected",
    "steps_used",
    "predictor_calls",
    "exit_step",
    "exit_reason",
    "final_avg_answer_conf",
    "error",
    "accuracy",
    "mean_predictor_calls",
    "speedup",
    "n_errors",
];

pub fn write_summary_csv<W: Write>(report: &SuiteReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in &report.rows {
        let error = match (&r.error_kind, &r.error) {
            (Some(k), Some(m)) => format!("{k}: {m}"),
            _ => String::new(),
        };
        out.write_record([
            r.task_id.to_string(),
            r.rung.name().to_string(),
            mode_name(r.mode).to_string(),
            r.correct.to_string(),
            opt(r.answer),
            r.expected.to_string(),
            r.steps_used.to_string(),
            r.predictor_calls.to_string(),
            opt(r.exit_step),
            opt(r.exit_reason.map(exit_reason_name)),
            opt(r.final_avg_answer_conf),
            error,
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    let a = &report.aggregate;
    let rung = report.rows.first().map(|r| r.rung.name()).unwrap_or_default();
    let mode = report.rows.first().map(|r| mode_name(r.mode)).unwrap_or_default();
    let blank = String::new;
    out.write_record([
        "aggregate".to_string(),
        rung.to_string(),
        mode.to_string(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        blank(),
        a.accuracy.to_string(),
        a.mean_predictor_calls.to_string(),
        opt(a.speedup),
        a.n_errors.to_string(),
    ])?;
    out.flush()?;
    Ok(())
}

pub fn write_summary_file(report: &SuiteReport, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_summary_csv(report, BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))
}

/// Mean predictor calls recorded in the aggregate row of a summary CSV.
pub fn read_baseline_calls(path: &Path) -> Result<f64> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading baseline {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = headers
        .iter()
        .position(|h| h == "mean_predictor_calls")
        .with_context(|| format!("{} has no mean_predictor_calls column", path.display()))?;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.get(0) == Some("aggregate") {
            let v = rec.get(col).unwrap_or_default();
            return v.parse().with_context(|| format!("bad mean_predictor_calls {v:?} in {}", path.display()));
        }
    }
    anyhow::bail!("{} has no aggregate row", path.display())
}

pub fn trace_file_name(task_id: usize) -> String {
    format!("task_{task_id:05}.jsonl")
}

/// One JSONL file per completed task.
pub fn write_traces(report: &SuiteReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (row, trace) in report.rows.iter().zip(&report.traces) {
        let Some(trace) = trace else { continue };
        let path = dir.join(trace_file_name(row.task_id));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        trace.write_jsonl(&mut w).with_context(|| format!("writing {}", path.display()))?;
        w.flush()?;
    }
    Ok(())
}
