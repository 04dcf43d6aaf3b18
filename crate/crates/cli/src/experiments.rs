//! The four-rung ablation ladder and one-axis sweeps.

use std::io::Write;
use std::str::FromStr;

use anyhow::{bail, Result};

use ice_core::{ChainArithTask, DecodeRung};

use crate::config::ExperimentConfig;
use crate::suite::{run_suite_rung, SuiteReport};

#[derive(Clone, Debug, PartialEq)]
pub struct LadderReport {
    pub rungs: Vec<(DecodeRung, SuiteReport)>,
}

impl LadderReport {
    pub fn get(&self, rung: DecodeRung) -> &SuiteReport {
        &self.rungs.iter().find(|(r, _)| *r == rung).expect("every rung is run").1
    }
}

/// Vanilla, Segment, Structured and the early-exit decoder on identical
/// tasks and per-task seeds.
pub fn run_ablation_ladder(config: &ExperimentConfig, tasks: &[ChainArithTask]) -> Result<LadderReport> {
    config.validate()?;
    let rungs = DecodeRung::LADDER.into_iter().map(|r| (r, run_suite_rung(config, r, tasks))).collect();
    Ok(LadderReport { rungs })
}

pub fn write_ladder_csv<W: Write>(report: &LadderReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rung", "n_tasks", "n_errors", "accuracy", "mean_predictor_calls", "speedup_vs_vanilla"])?;
    let base = report.get(DecodeRung::Vanilla).aggregate.mean_predictor_calls;
    for (rung, rep) in &report.rungs {
        let a = &rep.aggregate;
        out.write_record([
            rung.name().to_string(),
            a.n_tasks.to_string(),
            a.n_errors.to_string(),
            a.accuracy.to_string(),
            a.mean_predictor_calls.to_string(),
            (base / a.mean_predictor_calls).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    NThinkingSteps,
    Tau,
    Allocation,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NThinkingSteps => "n_thinking_steps",
            SweepAxis::Tau => "tau",
            SweepAxis::Allocation => "allocation",
        }
    }

    fn config_key(self) -> &'static str {
        match self {
            SweepAxis::NThinkingSteps => "nt",
            SweepAxis::Tau => "tau",
            SweepAxis::Allocation => "alloc",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n_thinking_steps" | "nt" => Ok(SweepAxis::NThinkingSteps),
            "tau" => Ok(SweepAxis::Tau),
            "allocation" | "alloc" => Ok(SweepAxis::Allocation),
            _ => bail!("unknown sweep axis {s:?} (expected n_thinking_steps, tau or allocation)"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: String,
    pub step_budgets: Vec<usize>,
    pub report: SuiteReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

/// One suite per value with shared tasks and seed.
pub fn sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[String],
    tasks: &[ChainArithTask],
) -> Result<SweepReport> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    if axis == SweepAxis::Tau && config.rung != DecodeRung::Ice {
        bail!("a tau sweep needs the ice rung, not {}", config.rung.name());
    }
    let configs = values
        .iter()
        .map(|v| {
            let mut c = config.clone();
            c.set(axis.config_key(), v)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let points = values
        .iter()
        .zip(&configs)
        .map(|(v, c)| {
            Ok(SweepPoint {
                value: v.trim().to_string(),
                step_budgets: c.layout_spec(c.rung).step_budgets()?,
                report: run_suite_rung(c, c.rung, tasks),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { axis, points })
}

/// Long format: `axis, axis_value, metric, value`.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["axis", "axis_value", "metric", "value"])?;
    let axis = report.axis.name();
    for p in &report.points {
        let a = &p.report.aggregate;
        let mut row = |metric: &str, value: String| out.write_record([axis, &p.value, metric, &value]);
        row("n_tasks", a.n_tasks.to_string())?;
        row("n_errors", a.n_errors.to_string())?;
        row("layout_errors", a.layout_errors.to_string())?;
        row("accuracy", a.accuracy.to_string())?;
        row("mean_predictor_calls", a.mean_predictor_calls.to_string())?;
        for (i, b) in p.step_budgets.iter().enumerate() {
            row(&format!("step_budget_{}", i + 1), b.to_string())?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::gen_tasks;

    #[test]
    fn exact_oracle_ladder_is_perfect() {
        let tasks = gen_tasks(4, 20, 2, 4).unwrap();
        let cfg = ExperimentConfig { eps: 0.0, ..Default::default() };
        let ladder = run_ablation_ladder(&cfg, &tasks).unwrap();
        assert_eq!(ladder.rungs.len(), 4);
        for (_, rep) in &ladder.rungs {
            assert_eq!(rep.aggregate.accuracy, 1.0);
        }
        let mut buf = Vec::new();
        write_ladder_csv(&ladder, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
    }

    #[test]
    fn allocation_sweep_reports_budgets() {
        let tasks = gen_tasks(4, 4, 2, 2).unwrap();
        let cfg = ExperimentConfig { nt: 3, budget: 12, ..Default::default() };
        let values: Vec<String> = ["uniform", "front", "back"].map(String::from).to_vec();
        let rep = sweep(&cfg, SweepAxis::Allocation, &values, &tasks).unwrap();
        assert_eq!(rep.points[0].step_budgets, vec![4, 4, 4]);
        assert_eq!(rep.points[1].step_budgets, vec![6, 4, 2]);
        assert_eq!(rep.points[2].step_budgets, vec![2, 4, 6]);
    }

    #[test]
    fn sweep_preconditions() {
        let tasks = gen_tasks(4, 4, 2, 2).unwrap();
        let cfg = ExperimentConfig::default();
        assert!(sweep(&cfg, SweepAxis::Tau, &[], &tasks).is_err());
        assert!(sweep(&cfg, SweepAxis::Tau, &["-1".into()], &tasks).is_err());
        let vanilla = ExperimentConfig { rung: DecodeRung::Vanilla, ..Default::default() };
        assert!(sweep(&vanilla, SweepAxis::Tau, &["0.5".into()], &tasks).is_err());
        assert!("depth".parse::<SweepAxis>().is_err());
    }
}
