//! Experiment configuration: defaults, `key = value` files and per-key
//! overrides.

use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use ice_core::{
    mode_preset, Allocation, DecodeConfig, DecodeRung, LayoutSpec, Mode, Selection, StepSchedule, TraceOptions,
    UnmaskingStrategy, DEFAULT_JUMP_DELTA,
};

/// Everything a run depends on besides the task list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub m_min: usize,
    pub m_max: usize,
    pub eps: f64,
    pub pad_variants: bool,
    pub nt: usize,
    pub budget: usize,
    pub alloc: Allocation,
    pub answer_len: usize,
    pub rung: DecodeRung,
    /// Step budget `N`; `None` means one step per masked generation position.
    pub steps: Option<usize>,
    pub selection: Selection,
    /// Explicit schedule; otherwise the mode preset's, otherwise `Default`.
    pub schedule: Option<StepSchedule>,
    /// Explicit threshold; otherwise the mode preset's, otherwise 0.9.
    pub tau: Option<f64>,
    pub mode: Option<Mode>,
    pub n_tasks: usize,
    pub trace_positions: bool,
    pub delta: f64,
    pub parallel: bool,
}

pub const DEFAULT_TAU: f64 = 0.9;

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            m_min: 2,
            m_max: 4,
            eps: 0.2,
            pad_variants: false,
            nt: 3,
            budget: 12,
            alloc: Allocation::Uniform,
            answer_len: 1,
            rung: DecodeRung::Ice,
            steps: None,
            selection: Selection::ConfidenceTopK,
            schedule: None,
            tau: None,
            mode: None,
            n_tasks: 100,
            trace_positions: true,
            delta: DEFAULT_JUMP_DELTA,
            parallel: true,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow::anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    match value {
        "" | "none" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("invalid value {value:?} for {key}: expected a boolean"),
    }
}

pub fn parse_allocation(value: &str) -> Result<Allocation> {
    match value.to_ascii_lowercase().as_str() {
        "uniform" => Ok(Allocation::Uniform),
        "front" | "front_heavy" | "frontheavy" => Ok(Allocation::FrontHeavy),
        "back" | "back_heavy" | "backheavy" => Ok(Allocation::BackHeavy),
        _ => bail!("unknown allocation {value:?} (expected uniform, front or back)"),
    }
}

pub fn allocation_name(a: Allocation) -> &'static str {
    match a {
        Allocation::Uniform => "uniform",
        Allocation::FrontHeavy => "front",
        Allocation::BackHeavy => "back",
    }
}

pub fn parse_rung(value: &str) -> Result<DecodeRung> {
    DecodeRung::LADDER
        .into_iter()
        .find(|r| r.name().eq_ignore_ascii_case(value))
        .with_context(|| format!("unknown rung {value:?} (expected vanilla, segment, structured or ice)"))
}

pub fn parse_mode(value: &str) -> Result<Option<Mode>> {
    match value.to_ascii_lowercase().as_str() {
        "" | "none" => Ok(None),
        "sp" => Ok(Some(Mode::Sp)),
        "pp" => Ok(Some(Mode::Pp)),
        _ => bail!("unknown mode {value:?} (expected sp or pp)"),
    }
}

pub fn mode_name(mode: Option<Mode>) -> &'static str {
    match mode {
        None => "",
        Some(Mode::Sp) => "sp",
        Some(Mode::Pp) => "pp",
    }
}

fn parse_selection(value: &str) -> Result<Selection> {
    match value.to_ascii_lowercase().as_str() {
        "confidence" | "top_k" | "topk" | "confidence_top_k" => Ok(Selection::ConfidenceTopK),
        "stochastic" | "random" | "stochastic_k" => Ok(Selection::StochasticK),
        _ => bail!("unknown selection {value:?} (expected confidence or stochastic)"),
    }
}

fn parse_schedule(value: &str) -> Result<Option<StepSchedule>> {
    match value.to_ascii_lowercase().as_str() {
        "" | "none" | "auto" => Ok(None),
        "default" => Ok(Some(StepSchedule::Default)),
        "aggressive" => Ok(Some(StepSchedule::Aggressive)),
        _ => bail!("unknown schedule {value:?} (expected default or aggressive)"),
    }
}

impl ExperimentConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "seed" => self.seed = parse(key, value)?,
            "m_min" => self.m_min = parse(key, value)?,
            "m_max" => self.m_max = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "pad_variants" => self.pad_variants = parse_bool(key, value)?,
            "nt" | "n_thinking_steps" => self.nt = parse(key, value)?,
            "budget" => self.budget = parse(key, value)?,
            "alloc" | "allocation" => self.alloc = parse_allocation(value)?,
            "answer_len" => self.answer_len = parse(key, value)?,
            "rung" => self.rung = parse_rung(value)?,
            "steps" => self.steps = parse_optional(key, value)?,
            "selection" | "strategy" => self.selection = parse_selection(value)?,
            "schedule" => self.schedule = parse_schedule(value)?,
            "tau" => self.tau = parse_optional(key, value)?,
            "mode" => self.mode = parse_mode(value)?,
            "n_tasks" | "n" => self.n_tasks = parse(key, value)?,
            "trace_positions" => self.trace_positions = parse_bool(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').with_context(|| format!("line {}: expected `key = value`", i + 1))?;
            self.set(key, value).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text).with_context(|| format!("in config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config in the same `key = value` format it is read from.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let schedule = self.schedule.map(|s| match s {
            StepSchedule::Default => "default".to_string(),
            StepSchedule::Aggressive => "aggressive".to_string(),
        });
        let selection = match self.selection {
            Selection::ConfidenceTopK => "confidence",
            Selection::StochasticK => "stochastic",
        };
        let mode = match self.mode {
            None => "none",
            m => mode_name(m),
        };
        [
            format!("seed = {}", self.seed),
            format!("m_min = {}", self.m_min),
            format!("m_max = {}", self.m_max),
            format!("eps = {}", self.eps),
            format!("pad_variants = {}", self.pad_variants),
            format!("nt = {}", self.nt),
            format!("budget = {}", self.budget),
            format!("alloc = {}", allocation_name(self.alloc)),
            format!("answer_len = {}", self.answer_len),
            format!("rung = {}", self.rung.name()),
            format!("steps = {}", opt(self.steps.map(|s| s.to_string()))),
            format!("selection = {selection}"),
            format!("schedule = {}", opt(schedule)),
            format!("tau = {}", opt(self.tau.map(|t| t.to_string()))),
            format!("mode = {mode}"),
            format!("n_tasks = {}", self.n_tasks),
            format!("trace_positions = {}", self.trace_positions),
            format!("delta = {}", self.delta),
            format!("parallel = {}", self.parallel),
        ]
        .join("\n")
            + "\n"
    }

    /// Checks the fields that do not depend on a particular task.
    pub fn validate(&self) -> Result<()> {
        if !(2..=6).contains(&self.m_min) || !(2..=6).contains(&self.m_max) || self.m_min > self.m_max {
            bail!("m range [{}, {}] must lie within [2, 6]", self.m_min, self.m_max);
        }
        if !(0.0..0.5).contains(&self.eps) {
            bail!("eps = {} outside [0, 0.5)", self.eps);
        }
        self.layout_spec(self.rung).validate()?;
        if self.steps == Some(0) {
            bail!("steps must be at least 1");
        }
        if let Some(t) = self.tau {
            if t.is_nan() || t <= 0.0 {
                bail!("tau = {t} must be positive");
            }
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            bail!("delta = {} must be positive", self.delta);
        }
        Ok(())
    }

    pub fn layout_spec(&self, rung: DecodeRung) -> LayoutSpec {
        LayoutSpec {
            n_thinking_steps: self.nt,
            total_thinking_budget: self.budget,
            allocation: self.alloc,
            answer_len: self.answer_len,
            rung: rung.layout_rung(),
        }
    }

    pub fn total_steps(&self) -> usize {
        self.steps.unwrap_or(self.budget + self.answer_len)
    }

    pub fn effective_tau(&self) -> f64 {
        self.tau.or(self.mode.map(|m| mode_preset(m).tau)).unwrap_or(DEFAULT_TAU)
    }

    /// Decoder settings for `rung`; the threshold and mode only apply to the
    /// early-exit rung.
    pub fn decode_config(&self, rung: DecodeRung, seed: u64) -> DecodeConfig {
        let ice = rung == DecodeRung::Ice;
        let preset_schedule = if ice { self.mode.map(|m| mode_preset(m).schedule) } else { None };
        DecodeConfig {
            total_steps: self.total_steps(),
            strategy: UnmaskingStrategy {
                selection: self.selection,
                schedule: self.schedule.or(preset_schedule).unwrap_or_default(),
            },
            seed,
            rung,
            tau: ice.then(|| self.effective_tau()),
            mode: if ice { self.mode } else { None },
            trace: TraceOptions { capture_positions: self.trace_positions },
        }
    }
}
