//! Masked diffusion decoding with in-place reasoning templates and a
//! confidence-triggered early exit.
//!
//! The crate is organised bottom-up:
//!
//! - [`vocab`] and [`layout`]: tokens, sequence state, and the structured
//!   prompt / thinking / indicator / answer layout.
//! - [`diffusion`]: the linear-schedule forward process and the NELBO
//!   estimator.
//! - [`predictor`]: the predictor contract, a uniform baseline and an exact
//!   enumerative oracle over chained modular-arithmetic tasks.
//! - [`decode`]: greedy refinement with confidence or stochastic unmasking.
//! - [`ice`]: two-phase decoding with early exit.
//! - [`trace`]: per-step traces and confidence-jump statistics.

pub mod decode;
pub mod diffusion;
pub mod error;
pub mod ice;
pub mod layout;
pub mod predictor;
pub mod trace;
pub mod vocab;

pub use decode::{
    decode_sectioned, decode_vanilla, greedy_estimate, token_confidence, transition, DecodeConfig, DecodeOutcome,
    DecodeRung, Mode, Selection, StepSchedule, UnmaskingStrategy,
};
pub use diffusion::{corrupt, nelbo_estimate, NelboEstimate, NoiseSchedule, T_MIN};
pub use error::{IceError, Result};
pub use ice::{
    avg_answer_confidence, check_early_exit, decode_ice, mode_preset, ExitReason, IceOutcome, ModePreset, PhaseState,
    NEVER_EXIT,
};
pub use layout::{
    allocate_masks, build_layout, section_positions, Allocation, LayoutRung, LayoutSpec, Section, SectionKind,
    SequenceState,
};
pub use predictor::{
    enumerate_candidates, enumerate_candidates_with, oracle_conditional, Candidate, CandidateOptions, CandidateSet,
    ChainArithTask, Op, OraclePredictor, Predictor, PredictorOutput, UniformPredictor,
};
pub use trace::{
    confidence_jumps, confidence_trajectory, jump_category_histogram, ConfidenceJump, Phase, PositionRecord,
    TokenCategory, Trace, TraceOptions, TraceRecord, DEFAULT_JUMP_DELTA,
};
pub use vocab::{TokenId, Vocabulary, SYNTHETIC_VOCAB_SIZE};
