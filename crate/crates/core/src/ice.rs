//! Two-phase decoding with confidence-triggered early exit.
//!
//! Phase 1 refines only the thinking slots while every answer position stays
//! masked, checking the mean answer confidence after each predictor call.
//! Once it reaches `tau` (or the thinking is finished, or the step budget
//! runs out) phase 2 fills the answer, and any thinking slot still masked,
//! from the output of the last call. Phase 2 issues no predictor call.

use serde::{Deserialize, Serialize};

use crate::decode::{
    greedy_estimate, reveal_all, token_confidence, transition, DecodeConfig, DecodeOutcome, DecodeRung, Mode,
    StepSchedule,
};
use crate::error::{IceError, Result};
use crate::layout::{LayoutRung, SectionKind, SequenceState};
use crate::predictor::{Predictor, PredictorOutput};
use crate::trace::{Phase, Recorder};

/// Threshold value that never triggers an exit.
pub const NEVER_EXIT: f64 = f64::INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Threshold,
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phase: Phase,
    /// Countdown step index `k` at which the exit fired.
    pub exit_step: Option<usize>,
    pub exit_reason: ExitReason,
    /// Mean answer confidence at the last monitored step.
    pub final_confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IceOutcome {
    pub decode: DecodeOutcome,
    pub phase: PhaseState,
}

/// Mean confidence over the currently masked answer positions.
pub fn avg_answer_confidence(output: &PredictorOutput, state: &SequenceState) -> Result<f64> {
    let masked = state.masked_positions_where(|k| k == SectionKind::Answer);
    if masked.is_empty() {
        return Err(IceError::UndefinedConfidence);
    }
    Ok(masked.iter().map(|&p| token_confidence(output, p)).sum::<f64>() / masked.len() as f64)
}

/// `avg_conf >= tau`; any `tau > 1` never fires.
pub fn check_early_exit(avg_conf: f64, tau: f64) -> bool {
    avg_conf >= tau
}

/// Configuration fragment of a mode preset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModePreset {
    pub tau: f64,
    pub schedule: StepSchedule,
}

pub fn mode_preset(mode: Mode) -> ModePreset {
    match mode {
        Mode::Sp => ModePreset { tau: 0.70, schedule: StepSchedule::Aggressive },
        Mode::Pp => ModePreset { tau: 0.95, schedule: StepSchedule::Default },
    }
}

impl DecodeConfig {
    /// An early-exit config with the preset applied; fields stay overridable.
    pub fn ice(total_steps: usize, mode: Mode) -> Self {
        let preset = mode_preset(mode);
        let mut cfg = DecodeConfig::new(DecodeRung::Ice, total_steps);
        cfg.tau = Some(preset.tau);
        cfg.strategy.schedule = preset.schedule;
        cfg.mode = Some(mode);
        cfg
    }
}

pub fn decode_ice<P: Predictor + ?Sized>(
    state0: &SequenceState,
    config: &DecodeConfig,
    predictor: &P,
) -> Result<IceOutcome> {
    config.validate()?;
    if config.rung != DecodeRung::Ice {
        return Err(IceError::Precondition(format!("expected ice rung, got {}", config.rung.name())));
    }
    if !matches!(state0.rung(), LayoutRung::Structured | LayoutRung::Segment) {
        return Err(IceError::Precondition("early exit needs a thinking/answer layout".into()));
    }
    let tau = config.tau.expect("validated");
    let n = config.total_steps;
    let mut rng = config.rng();
    let mut state = state0.clone();
    state.step_index = n;
    let mut recorder = Recorder::new(config.trace, &state);
    let mut calls = 0;
    let mut last: Option<PredictorOutput> = None;
    let mut exit_step = None;
    let mut final_confidence = 0.0;

    for s in 0..n {
        let out = predictor.predict(&state)?;
        calls += 1;
        let avg = avg_answer_confidence(&out, &state)?;
        final_confidence = avg;
        recorder.snapshot(Phase::Reasoning, &state, &out, Some(avg), calls);
        if check_early_exit(avg, tau) {
            exit_step = Some(state.step_index);
            last = Some(out);
            break;
        }
        let thinking = state.masked_positions_where(SectionKind::is_thinking_slot);
        if thinking.is_empty() {
            // Nothing left to refine; later calls would see the same state.
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
    let state = reveal_all(&state, &out)?;
    recorder.snapshot(Phase::AnswerGeneration, &state, &out, Some(final_confidence), calls);

    let exit_reason = if exit_step.is_some() { ExitReason::Threshold } else { ExitReason::Exhausted };
    Ok(IceOutcome {
        decode: DecodeOutcome { state, trace: recorder.finish(), predictor_calls: calls, steps_used },
        phase: PhaseState { phase: Phase::AnswerGeneration, exit_step, exit_reason, final_confidence },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decode::decode_sectioned;
    use crate::layout::{build_layout, Allocation, LayoutSpec};
    use crate::predictor::{CandidateOptions, ChainArithTask, OraclePredictor};
    use crate::trace::confidence_trajectory;
    use crate::vocab::TokenId;

    fn spec(n: usize, budget: usize, answer_len: usize) -> LayoutSpec {
        LayoutSpec {
            n_thinking_steps: n,
            total_thinking_budget: budget,
            allocation: Allocation::Uniform,
            answer_len,
            rung: LayoutRung::Structured,
        }
    }

    fn ice_cfg(steps: usize, tau: f64) -> DecodeConfig {
        let mut cfg = DecodeConfig::new(DecodeRung::Ice, steps);
        cfg.tau = Some(tau);
        cfg
    }

    fn setup(task: &str, s: &LayoutSpec, eps: f64) -> (ChainArithTask, OraclePredictor, SequenceState) {
        let task: ChainArithTask = task.parse().unwrap();
        let oracle = OraclePredictor::for_task(&task, s, eps, CandidateOptions::default()).unwrap();
        let state0 = build_layout(&task.prompt_tokens(), s).unwrap();
        (task, oracle, state0)
    }

    #[test]
    fn exit_check() {
        assert!(check_early_exit(0.95, 0.9));
        assert!(!check_early_exit(0.89, 0.9));
        assert!(check_early_exit(0.9, 0.9));
        assert!(!check_early_exit(1.0, NEVER_EXIT));
        assert!(!check_early_exit(1.0, 1.01));
    }

    #[test]
    fn answer_confidence_mean() {
        let state = {
            let s = spec(1, 4, 2);
            setup("2;3;+,4", &s, 0.0).2
        };
        let answer = state.positions_where(|k| k == SectionKind::Answer);
        let v = 26;
        let mut probs = vec![0.0; state.len() * v];
        for p in 0..state.len() {
            probs[p * v] = 1.0;
        }
        probs[answer[0] * v] = 0.8;
        probs[answer[0] * v + 1] = 0.2;
        let out = PredictorOutput::new(probs, v).unwrap();
        approx::assert_abs_diff_eq!(avg_answer_confidence(&out, &state).unwrap(), 0.9, epsilon = 1e-12);

        let done = reveal_all(&state, &out).unwrap();
        assert_eq!(avg_answer_confidence(&out, &done).unwrap_err(), IceError::UndefinedConfidence);
    }

    #[test]
    fn certain_oracle_exits_immediately() {
        let s = spec(2, 8, 1);
        let (task, oracle, state0) = setup("3;4;-,6;*,7", &s, 0.0);
        let res = decode_ice(&state0, &ice_cfg(9, 0.9), &oracle).unwrap();
        assert_eq!(res.phase.exit_reason, ExitReason::Threshold);
        assert_eq!(res.phase.exit_step, Some(9));
        assert_eq!(res.decode.predictor_calls, 1);
        let answer = state0.positions_where(|k| k == SectionKind::Answer)[0];
        assert_eq!(res.decode.tokens()[answer], TokenId::digit(task.answer()));
        assert_eq!(res.decode.tokens(), oracle.candidates().canonical().tokens.as_slice());
    }

    #[test]
    fn exit_after_result_digit() {
        let s = spec(1, 4, 1);
        let (_, oracle, state0) = setup("2;3;+,4", &s, 0.2);
        let res = decode_ice(&state0, &ice_cfg(5, 0.9), &oracle).unwrap();
        assert_eq!(res.phase.exit_reason, ExitReason::Threshold);
        let traj = confidence_trajectory(&res.decode.trace).unwrap();
        approx::assert_abs_diff_eq!(traj[0].1, 0.8, epsilon = 1e-12);
        // Three formatting slots, then the digit; the next check sees 1.0.
        let exit = res.decode.trace.records.iter().find(|r| r.avg_answer_conf == Some(1.0)).unwrap();
        assert_eq!(exit.step, 4);
        let digit = exit.unmasked_tokens().next().unwrap();
        assert_eq!(digit.token, TokenId::digit(7));
        assert_eq!(res.decode.predictor_calls, 5);
        let answer = state0.positions_where(|k| k == SectionKind::Answer)[0];
        assert_eq!(res.decode.tokens()[answer], TokenId::digit(7));
    }

    #[test]
    fn answer_stays_masked_in_phase_one() {
        let s = spec(3, 15, 2);
        let (_, oracle, state0) = setup("4;2;*,3;+,8;-,5", &s, 0.2);
        let res = decode_ice(&state0, &ice_cfg(17, 0.99), &oracle).unwrap();
        for rec in &res.decode.trace.records {
            if rec.phase == Phase::Reasoning {
                assert!(rec
                    .positions
                    .iter()
                    .filter(|p| p.section == SectionKind::Answer)
                    .all(|p| p.token == TokenId::MASK));
            }
        }
        assert!(res.decode.state.is_complete());
    }

    #[test]
    fn never_exit_matches_sectioned() {
        let s = spec(3, 12, 1);
        let (_, oracle, state0) = setup("4;9;+,9;*,2;-,3", &s, 0.2);
        let ice = decode_ice(&state0, &ice_cfg(13, NEVER_EXIT), &oracle).unwrap();
        let full = decode_sectioned(&state0, &DecodeConfig::new(DecodeRung::Structured, 13), &oracle).unwrap();
        assert_eq!(ice.phase.exit_reason, ExitReason::Exhausted);
        assert_eq!(ice.decode.tokens(), full.tokens());
        assert_eq!(ice.decode.predictor_calls, full.predictor_calls);
    }

    #[test]
    fn presets() {
        assert_eq!(mode_preset(Mode::Sp).tau, 0.70);
        assert_eq!(mode_preset(Mode::Pp).tau, 0.95);
        assert_eq!(mode_preset(Mode::Sp).schedule, StepSchedule::Aggressive);
        let mut cfg = DecodeConfig::ice(10, Mode::Sp);
        cfg.tau = Some(0.9);
        assert_eq!(cfg.tau, Some(0.9));
        assert_eq!(cfg.strategy.schedule, StepSchedule::Aggressive);
    }

    #[test]
    fn requires_tau_and_thinking_layout() {
        let s = spec(1, 4, 1);
        let (_, oracle, state0) = setup("2;3;+,4", &s, 0.2);
        assert!(decode_ice(&state0, &DecodeConfig::new(DecodeRung::Ice, 5), &oracle).is_err());
        assert!(decode_ice(&state0, &DecodeConfig::new(DecodeRung::Structured, 5), &oracle).is_err());
        let vs = LayoutSpec { rung: LayoutRung::Vanilla, ..s };
        let (_, oracle, state0) = setup("2;3;+,4", &vs, 0.2);
        assert!(decode_ice(&state0, &ice_cfg(5, 0.9), &oracle).is_err());
    }
}
