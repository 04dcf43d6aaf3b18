//! Baseline iterative refinement: greedy estimation, confidence scoring and
//! monotone unmasking transitions.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};
use crate::layout::{LayoutRung, SectionKind, SequenceState};
use crate::predictor::{Predictor, PredictorOutput};
use crate::trace::{answer_confidence_for_trace, Phase, Recorder, Trace, TraceOptions};
use crate::vocab::TokenId;

/// Which masked positions a transition reveals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Highest confidence first, ties to the lowest position.
    #[default]
    ConfidenceTopK,
    /// Uniformly at random from the seeded decode RNG.
    StochasticK,
}

/// Tokens to reveal per step as a function of the masked count and the
/// steps left.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `ceil(remaining / steps_remaining)`
    #[default]
    Default,
    /// `ceil(remaining / max(1, steps_remaining / 2))`
    Aggressive,
}

impl StepSchedule {
    pub fn count(self, remaining: usize, steps_remaining: usize) -> usize {
        if remaining == 0 {
            return 0;
        }
        let denom = match self {
            StepSchedule::Default => steps_remaining.max(1),
            StepSchedule::Aggressive => (steps_remaining / 2).max(1),
        };
        remaining.div_ceil(denom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmaskingStrategy {
    pub selection: Selection,
    pub schedule: StepSchedule,
}

/// Decoder selected by a config; the first three map onto layout rungs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeRung {
    Vanilla,
    Segment,
    Structured,
    Ice,
}

impl DecodeRung {
    pub const LADDER: [DecodeRung; 4] =
        [DecodeRung::Vanilla, DecodeRung::Segment, DecodeRung::Structured, DecodeRung::Ice];

    /// Layout the rung decodes.
    pub fn layout_rung(self) -> LayoutRung {
        match self {
            DecodeRung::Vanilla => LayoutRung::Vanilla,
            DecodeRung::Segment => LayoutRung::Segment,
            DecodeRung::Structured | DecodeRung::Ice => LayoutRung::Structured,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DecodeRung::Vanilla => "vanilla",
            DecodeRung::Segment => "segment",
            DecodeRung::Structured => "structured",
            DecodeRung::Ice => "ice",
        }
    }
}

/// Speed- or accuracy-prioritised preset of the early-exit decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sp,
    Pp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Refinement step budget `N`.
    pub total_steps: usize,
    pub strategy: UnmaskingStrategy,
    pub seed: u64,
    pub rung: DecodeRung,
    /// Early-exit threshold; set exactly when `rung` is `Ice`. Values above
    /// one never trigger.
    pub tau: Option<f64>,
    pub mode: Option<Mode>,
    pub trace: TraceOptions,
}

impl DecodeConfig {
    pub fn new(rung: DecodeRung, total_steps: usize) -> Self {
        Self {
            total_steps,
            strategy: UnmaskingStrategy::default(),
            seed: 0,
            rung,
            tau: None,
            mode: None,
            trace: TraceOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(IceError::Precondition("total_steps must be at least 1".into()));
        }
        match (self.rung, self.tau) {
            (DecodeRung::Ice, None) => Err(IceError::Precondition("ice decoding needs tau".into())),
            (DecodeRung::Ice, Some(t)) if t.is_nan() || t <= 0.0 => {
                Err(IceError::Domain { value: t, domain: "(0, inf)" })
            }
            (DecodeRung::Ice, Some(_)) => Ok(()),
            (_, Some(_)) => {
                Err(IceError::Precondition(format!("tau is only meaningful for ice, not {}", self.rung.name())))
            }
            (_, None) => Ok(()),
        }
    }

    pub(crate) fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Result of a complete decode.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub state: SequenceState,
    pub trace: Trace,
    pub predictor_calls: usize,
    /// Refinement iterations run before the sequence was completed.
    pub steps_used: usize,
}

impl DecodeOutcome {
    pub fn tokens(&self) -> &[TokenId] {
        self.state.tokens()
    }
}

/// Per-position argmax, ties to the lowest vocabulary index.
pub fn greedy_estimate(output: &PredictorOutput) -> Vec<TokenId> {
    output
        .rows()
        .map(|row| {
            let mut best = 0;
            for (v, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = v;
                }
            }
            TokenId(best as u16)
        })
        .collect()
}

/// Maximum probability at position `pos`.
pub fn token_confidence(output: &PredictorOutput, pos: usize) -> f64 {
    output.row(pos).iter().copied().fold(0.0, f64::max)
}

/// Reveals up to `count` masked positions among `targets`, writing the
/// estimate's tokens there. Returns the next state and the revealed
/// positions in ascending order.
pub fn transition(
    state: &SequenceState,
    estimate: &[TokenId],
    output: &PredictorOutput,
    count: usize,
    selection: Selection,
    targets: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(SequenceState, Vec<usize>)> {
    if estimate.len() != state.len() || output.len() != state.len() {
        return Err(IceError::Shape { expected: state.len(), actual: estimate.len().min(output.len()) });
    }
    let open: Vec<usize> = targets.iter().copied().filter(|&p| state.is_masked(p)).collect();
    let n = count.min(open.len());
    let mut chosen: Vec<usize> = match selection {
        Selection::ConfidenceTopK => {
            let mut scored: Vec<(f64, usize)> = open.iter().map(|&p| (token_confidence(output, p), p)).collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            scored.into_iter().take(n).map(|(_, p)| p).collect()
        }
        Selection::StochasticK => sample(rng, open.len(), n).into_iter().map(|i| open[i]).collect(),
    };
    chosen.sort_unstable();

    let mut next = state.clone();
    for &p in &chosen {
        if estimate[p] == state.mask_token() {
            return Err(IceError::Precondition(format!("estimate at position {p} is MASK")));
        }
        next.unmask(p, estimate[p]);
    }
    Ok((next, chosen))
}

/// Reveals every still-masked position from one output.
pub(crate) fn reveal_all(state: &SequenceState, output: &PredictorOutput) -> Result<SequenceState> {
    let estimate = greedy_estimate(output);
    let mut next = state.clone();
    for (p, &tok) in estimate.iter().enumerate() {
        if state.is_masked(p) {
            if tok == state.mask_token() {
                return Err(IceError::Precondition(format!("estimate at position {p} is MASK")));
            }
            next.unmask(p, tok);
        }
    }
    next.step_index = 0;
    Ok(next)
}

fn check_layout(state0: &SequenceState, config: &DecodeConfig, allowed: &[DecodeRung]) -> Result<()> {
    config.validate()?;
    if !allowed.contains(&config.rung) {
        return Err(IceError::Precondition(format!("decoder does not run rung {}", config.rung.name())));
    }
    if config.rung.layout_rung() != state0.rung() {
        return Err(IceError::Precondition(format!(
            "config rung {} does not match {:?} layout",
            config.rung.name(),
            state0.rung()
        )));
    }
    Ok(())
}

/// Runs up to `N` steps of predict → greedy estimate → transition over
/// every masked position, with no distinction between sections.
pub fn decode_vanilla<P: Predictor + ?Sized>(
    state0: &SequenceState,
    config: &DecodeConfig,
    predictor: &P,
) -> Result<DecodeOutcome> {
    check_layout(state0, config, &[DecodeRung::Vanilla, DecodeRung::Segment, DecodeRung::Structured])?;
    let n = config.total_steps;
    let mut rng = config.rng();
    let mut state = state0.clone();
    state.step_index = n;
    let mut recorder = Recorder::new(config.trace, &state);
    let mut calls = 0;
    let mut last = None;

    for s in 0..n {
        if state.is_complete() {
            break;
        }
        let out = predictor.predict(&state)?;
        calls += 1;
        recorder.snapshot(Phase::Refinement, &state, &out, answer_confidence_for_trace(&out, &state), calls);
        let estimate = greedy_estimate(&out);
        let targets = state.masked_positions_where(|_| true);
        let count = config.strategy.schedule.count(targets.len(), n - s);
        let (mut next, _) = transition(&state, &estimate, &out, count, config.strategy.selection, &targets, &mut rng)?;
        next.step_index = state.step_index - 1;
        state = next;
        last = Some(out);
    }
    if let Some(out) = &last {
        let avg = recorder.last_avg();
        recorder.snapshot(Phase::Refinement, &state, out, avg, calls);
    }
    Ok(DecodeOutcome { state, trace: recorder.finish(), predictor_calls: calls, steps_used: calls })
}

/// Thinking-first decode without early exit: refine only thinking slots
/// until none is masked, then reveal the answer in one step from the output
/// computed on the final thinking state.
///
/// The per-step count follows the fixed generation-region rate, i.e. the
/// schedule sees the masked thinking *and* answer positions.
pub fn decode_sectioned<P: Predictor + ?Sized>(
    state0: &SequenceState,
    config: &DecodeConfig,
    predictor: &P,
) -> Result<DecodeOutcome> {
    check_layout(state0, config, &[DecodeRung::Segment, DecodeRung::Structured])?;
    let n = config.total_steps;
    let mut rng = config.rng();
    let mut state = state0.clone();
    state.step_index = n;
    let mut recorder = Recorder::new(config.trace, &state);
    let mut calls = 0;
    let mut last: Option<PredictorOutput> = None;

    for s in 0..n {
        let out = predictor.predict(&state)?;
        calls += 1;
        recorder.snapshot(Phase::Reasoning, &state, &out, answer_confidence_for_trace(&out, &state), calls);
        let thinking = state.masked_positions_where(SectionKind::is_thinking_slot);
        if thinking.is_empty() {
            last = Some(out);
            break;
        }
        let generation = thinking.len() + state.masked_positions_where(|k| k == SectionKind::Answer).len();
        let count = config.strategy.schedule.count(generation, n - s);
        let estimate = greedy_estimate(&out);
        let (mut next, _) = transition(&state, &estimate, &out, count, config.strategy.selection, &thinking, &mut rng)?;
        next.step_index = state.step_index - 1;
        state = next;
        last = Some(out);
    }

    let out = last.expect("at least one step");
    let steps_used = calls;
    let avg = recorder.last_avg();
    let state = reveal_all(&state, &out)?;
    recorder.snapshot(Phase::AnswerGeneration, &state, &out, avg, calls);
    Ok(DecodeOutcome { state, trace: recorder.finish(), predictor_calls: calls, steps_used })
}
