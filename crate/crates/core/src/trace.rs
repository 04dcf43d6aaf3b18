//! Per-step decode traces and the confidence-dynamics statistics built on
//! them.
//!
//! A trace holds one [`TraceRecord`] per predictor call, describing the state
//! the call was made on: the record's `just_unmasked` flags mark positions
//! revealed by the transition that produced that state. Decoders append one
//! closing record for the completed sequence, reusing the last output's
//! confidences, so the closing record never adds a predictor call.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};
use crate::layout::{SectionKind, SequenceState};
use crate::predictor::PredictorOutput;
use crate::vocab::TokenId;

/// Decoding phase a record belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Single-phase refinement over every masked position.
    Refinement,
    /// Thinking-only refinement with the answer held masked.
    Reasoning,
    /// Single-step answer reveal.
    AnswerGeneration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionRecord {
    pub pos: usize,
    pub section: SectionKind,
    pub token: TokenId,
    pub confidence: f64,
    pub just_unmasked: bool,
}

/// Snapshot of one refinement step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub phase: Phase,
    /// `None` when the layout has no answer section.
    pub avg_answer_conf: Option<f64>,
    pub positions: Vec<PositionRecord>,
    pub predictor_calls_cum: usize,
}

impl TraceRecord {
    pub fn unmasked_tokens(&self) -> impl Iterator<Item = &PositionRecord> {
        self.positions.iter().filter(|p| p.just_unmasked)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Record every position; otherwise only freshly unmasked ones.
    pub capture_positions: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { capture_positions: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Newline-delimited JSON, one record per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| IceError::Parse(format!("line {}: {e}", i + 1)))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| IceError::Parse(format!("line {}: {e}", i + 1)))?);
        }
        Ok(Self { records })
    }
}

/// Mean confidence over masked answer positions, falling back to all answer
/// positions once none is masked. `None` without an answer section.
pub(crate) fn answer_confidence_for_trace(output: &PredictorOutput, state: &SequenceState) -> Option<f64> {
    let answer = state.positions_where(|k| k == SectionKind::Answer);
    if answer.is_empty() {
        return None;
    }
    let masked: Vec<usize> = answer.iter().copied().filter(|&p| state.is_masked(p)).collect();
    let basis = if masked.is_empty() { &answer } else { &masked };
    Some(basis.iter().map(|&p| crate::decode::token_confidence(output, p)).sum::<f64>() / basis.len() as f64)
}

pub(crate) struct Recorder {
    options: TraceOptions,
    prev_masked: Vec<bool>,
    trace: Trace,
}

impl Recorder {
    pub(crate) fn new(options: TraceOptions, initial: &SequenceState) -> Self {
        Self { options, prev_masked: initial.masked().to_vec(), trace: Trace::default() }
    }

    pub(crate) fn snapshot(
        &mut self,
        phase: Phase,
        state: &SequenceState,
        output: &PredictorOutput,
        avg_answer_conf: Option<f64>,
        calls: usize,
    ) {
        let positions = (0..state.len())
            .filter_map(|pos| {
                let just_unmasked = self.prev_masked[pos] && !state.is_masked(pos);
                (self.options.capture_positions || just_unmasked).then(|| PositionRecord {
                    pos,
                    section: state.kind_at(pos),
                    token: state.tokens()[pos],
                    confidence: crate::decode::token_confidence(output, pos),
                    just_unmasked,
                })
            })
            .collect();
        self.prev_masked.copy_from_slice(state.masked());
        self.trace.records.push(TraceRecord {
            step: self.trace.records.len(),
            phase,
            avg_answer_conf,
            positions,
            predictor_calls_cum: calls,
        });
    }

    pub(crate) fn last_avg(&self) -> Option<f64> {
        self.trace.records.last().and_then(|r| r.avg_answer_conf)
    }

    pub(crate) fn finish(self) -> Trace {
        self.trace
    }
}

/// Coarse token classes used for jump statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenCategory {
    Numerical,
    Operator,
    Punctuation,
    Identifier,
    Template,
    Other,
}

impl TokenCategory {
    pub const ALL: [TokenCategory; 6] = [
        TokenCategory::Numerical,
        TokenCategory::Operator,
        TokenCategory::Punctuation,
        TokenCategory::Identifier,
        TokenCategory::Template,
        TokenCategory::Other,
    ];

    /// Category of a token in the synthetic vocabulary.
    pub fn of(token: TokenId) -> Self {
        match token {
            t if t.as_digit().is_some() => TokenCategory::Numerical,
            t if t.is_var() => TokenCategory::Identifier,
            TokenId::PLUS | TokenId::MINUS | TokenId::TIMES => TokenCategory::Operator,
            TokenId::EQ | TokenId::SEMI | TokenId::QUERY => TokenCategory::Punctuation,
            TokenId::STEP | TokenId::ANS | TokenId::PAD => TokenCategory::Template,
            _ => TokenCategory::Other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TokenCategory::Numerical => "numerical",
            TokenCategory::Operator => "operator",
            TokenCategory::Punctuation => "punctuation",
            TokenCategory::Identifier => "identifier",
            TokenCategory::Template => "template",
            TokenCategory::Other => "other",
        }
    }
}

/// Default jump threshold on the average answer confidence.
pub const DEFAULT_JUMP_DELTA: f64 = 0.15;

/// `(step, avg_answer_conf)` for every record that carries an answer
/// confidence.
pub fn confidence_trajectory(trace: &Trace) -> Result<Vec<(usize, f64)>> {
    if trace.is_empty() {
        return Err(IceError::Precondition("empty trace".into()));
    }
    Ok(trace.records.iter().filter_map(|r| r.avg_answer_conf.map(|c| (r.step, c))).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceJump {
    pub step: usize,
    pub delta_conf: f64,
    pub tokens: Vec<(TokenId, TokenCategory)>,
}

/// Steps whose average answer confidence rose by at least `delta` over the
/// previous step, with the tokens revealed at that step.
pub fn confidence_jumps(trace: &Trace, delta: f64) -> Result<Vec<ConfidenceJump>> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(IceError::Precondition(format!("jump delta must be positive, got {delta}")));
    }
    let mut jumps = Vec::new();
    let mut prev: Option<f64> = None;
    for rec in &trace.records {
        let Some(conf) = rec.avg_answer_conf else { continue };
        if let Some(p) = prev {
            let d = conf - p;
            if d >= delta {
                jumps.push(ConfidenceJump {
                    step: rec.step,
                    delta_conf: d,
                    tokens: rec.unmasked_tokens().map(|t| (t.token, TokenCategory::of(t.token))).collect(),
                });
            }
        }
        prev = Some(conf);
    }
    Ok(jumps)
}

/// Category counts over the tokens revealed at every jump of every trace.
pub fn jump_category_histogram<'a>(
    traces: impl IntoIterator<Item = &'a Trace>,
    delta: f64,
) -> Result<BTreeMap<TokenCategory, usize>> {
    let mut hist: BTreeMap<TokenCategory, usize> = TokenCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for trace in traces {
        for jump in confidence_jumps(trace, delta)? {
            for (_, cat) in jump.tokens {
                *hist.entry(cat).or_default() += 1;
            }
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(step: usize, conf: f64, unmasked: &[TokenId]) -> TraceRecord {
        TraceRecord {
            step,
            phase: Phase::Reasoning,
            avg_answer_conf: Some(conf),
            positions: unmasked
                .iter()
                .enumerate()
                .map(|(i, &token)| PositionRecord {
                    pos: i,
                    section: SectionKind::ThinkingSlot(1),
                    token,
                    confidence: 1.0,
                    just_unmasked: true,
                })
                .collect(),
            predictor_calls_cum: step + 1,
        }
    }

    fn example() -> Trace {
        Trace {
            records: vec![
                rec(0, 0.8, &[]),
                rec(1, 0.8, &[TokenId::EQ]),
                rec(2, 1.0, &[TokenId::digit(7), TokenId::SEMI]),
            ],
        }
    }

    #[test]
    fn categories_cover_vocabulary() {
        assert_eq!(TokenCategory::of(TokenId::digit(3)), TokenCategory::Numerical);
        assert_eq!(TokenCategory::of(TokenId::TIMES), TokenCategory::Operator);
        assert_eq!(TokenCategory::of(TokenId::QUERY), TokenCategory::Punctuation);
        assert_eq!(TokenCategory::of(TokenId::var(2)), TokenCategory::Identifier);
        assert_eq!(TokenCategory::of(TokenId::PAD), TokenCategory::Template);
        assert_eq!(TokenCategory::of(TokenId::MASK), TokenCategory::Other);
    }

    #[test]
    fn trajectory_and_jumps() {
        let t = example();
        assert_eq!(confidence_trajectory(&t).unwrap(), vec![(0, 0.8), (1, 0.8), (2, 1.0)]);
        assert!(confidence_trajectory(&Trace::default()).is_err());

        let jumps = confidence_jumps(&t, 0.1).unwrap();
        assert_eq!(jumps.len(), 1);
        assert_eq!(jumps[0].step, 2);
        approx::assert_abs_diff_eq!(jumps[0].delta_conf, 0.2, epsilon = 1e-12);
        assert!(confidence_jumps(&t, 0.5).unwrap().is_empty());
        assert!(confidence_jumps(&t, 0.0).is_err());
    }

    #[test]
    fn histogram_counts() {
        let t = example();
        let h = jump_category_histogram([&t], 0.1).unwrap();
        assert_eq!(h[&TokenCategory::Numerical], 1);
        assert_eq!(h[&TokenCategory::Punctuation], 1);
        assert_eq!(h.values().sum::<usize>(), 2);
        let empty = jump_category_histogram(std::iter::empty::<&Trace>(), 0.1).unwrap();
        assert_eq!(empty.len(), TokenCategory::ALL.len());
        assert!(empty.values().all(|&c| c == 0));
    }

    #[test]
    fn field_names() {
        let mut buf = Vec::new();
        example().write_jsonl(&mut buf).unwrap();
        let first = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        let v: serde_json::Value = serde_json::from_str(&first).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        for k in ["step", "phase", "avg_answer_conf", "positions", "predictor_calls_cum"] {
            assert!(keys.iter().any(|x| x.as_str() == k), "missing {k}");
        }
        assert_eq!(keys.len(), 5);
    }

    fn arb_record() -> impl Strategy<Value = TraceRecord> {
        (
            0usize..100,
            prop_oneof![Just(Phase::Refinement), Just(Phase::Reasoning), Just(Phase::AnswerGeneration)],
            proptest::option::of(0.0f64..=1.0),
            proptest::collection::vec((0usize..64, 0u16..26, 0.0f64..=1.0, any::<bool>(), 0u16..10), 0..8),
            0usize..100,
        )
            .prop_map(|(step, phase, avg, pos, calls)| TraceRecord {
                step,
                phase,
                avg_answer_conf: avg,
                positions: pos
                    .into_iter()
                    .map(|(p, t, c, j, s)| PositionRecord {
                        pos: p,
                        section: if s == 0 { SectionKind::Answer } else { SectionKind::ThinkingSlot(s) },
                        token: TokenId(t),
                        confidence: c,
                        just_unmasked: j,
                    })
                    .collect(),
                predictor_calls_cum: calls,
            })
    }

    proptest! {
        #[test]
        fn jsonl_round_trip(records in proptest::collection::vec(arb_record(), 0..6)) {
            let trace = Trace { records };
            let mut buf = Vec::new();
            trace.write_jsonl(&mut buf).unwrap();
            let back = Trace::read_jsonl(buf.as_slice()).unwrap();
            prop_assert_eq!(back, trace);
        }
    }
}
