//! Exact Bayesian predictor over an enumerated set of clean sequences.
//!
//! Each candidate is one way the reasoning chain could be written out: every
//! intermediate result is either the correct application of the step's
//! operator to the candidate's own previous result, or that value ±1 (mod 10).
//! Conditioning on a partially unmasked state filters the set and the
//! per-position marginals are read off the surviving weights.

use crate::error::{IceError, Result};
use crate::layout::{build_layout, LayoutRung, LayoutSpec, SectionKind, SequenceState};
use crate::predictor::{ChainArithTask, Predictor, PredictorOutput};
use crate::vocab::{TokenId, SYNTHETIC_VOCAB_SIZE};

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Tokens in one `var = r ;` group.
const GROUP_LEN: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub tokens: Vec<TokenId>,
    pub weight: f64,
    /// Intermediate results `r_1 … r_{m-1}` written in this candidate.
    pub results: Vec<u8>,
    /// Offset of the assignment block inside an undivided span.
    pub offset: usize,
}

impl Candidate {
    pub fn answer(&self) -> u8 {
        *self.results.last().expect("m >= 2")
    }
}

/// Weighted hypothesis space of the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
    eps: f64,
    len: usize,
}

impl CandidateSet {
    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Common sequence length `L`.
    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// The error-free candidate at offset zero.
    pub fn canonical(&self) -> &Candidate {
        &self.candidates[0]
    }

    fn is_consistent(cand: &Candidate, state: &SequenceState, unmasked: &[usize]) -> bool {
        unmasked.iter().all(|&p| cand.tokens[p] == state.tokens()[p])
    }

    /// Candidates agreeing with every unmasked position of `state`.
    pub fn consistent<'a>(&'a self, state: &'a SequenceState) -> impl Iterator<Item = &'a Candidate> {
        let unmasked: Vec<usize> = (0..state.len()).filter(|&p| !state.is_masked(p)).collect();
        self.candidates.iter().filter(move |c| Self::is_consistent(c, state, &unmasked))
    }
}

/// Options for candidate enumeration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CandidateOptions {
    /// Let the assignment block float inside undivided spans (segment and
    /// vanilla layouts), splitting each chain's weight evenly over offsets.
    pub pad_variants: bool,
}

/// Enumerates the `3^(m-1)` chains for `task` laid out per `spec`.
pub fn enumerate_candidates(task: &ChainArithTask, spec: &LayoutSpec, eps: f64) -> Result<CandidateSet> {
    enumerate_candidates_with(task, spec, eps, CandidateOptions::default())
}

pub fn enumerate_candidates_with(
    task: &ChainArithTask,
    spec: &LayoutSpec,
    eps: f64,
    options: CandidateOptions,
) -> Result<CandidateSet> {
    if !(0.0..0.5).contains(&eps) {
        return Err(IceError::Domain { value: eps, domain: "[0, 0.5)" });
    }
    let template = build_layout(&task.prompt_tokens(), spec)?;
    let n_groups = task.m() - 1;
    let block = n_groups * GROUP_LEN;

    match spec.rung {
        LayoutRung::Structured => {
            if spec.n_thinking_steps < n_groups {
                return Err(IceError::LayoutIncompatible(format!(
                    "{} thinking steps for {n_groups} assignments",
                    spec.n_thinking_steps
                )));
            }
            let budgets = spec.step_budgets()?;
            if let Some(i) = budgets[..n_groups].iter().position(|&b| b < GROUP_LEN) {
                return Err(IceError::LayoutIncompatible(format!(
                    "step {} budget {} < {GROUP_LEN}",
                    i + 1,
                    budgets[i]
                )));
            }
        }
        LayoutRung::Segment | LayoutRung::Vanilla => {
            if spec.total_thinking_budget < block {
                return Err(IceError::LayoutIncompatible(format!(
                    "thinking budget {} < {block}",
                    spec.total_thinking_budget
                )));
            }
        }
    }

    let offsets: Vec<usize> = if options.pad_variants {
        match spec.rung {
            LayoutRung::Structured => vec![0],
            LayoutRung::Segment => (0..=spec.total_thinking_budget - block).collect(),
            LayoutRung::Vanilla => (0..=spec.generation_masked_len() - block - 1).collect(),
        }
    } else {
        vec![0]
    };

    let per_step = [1.0 - eps, eps / 2.0, eps / 2.0];
    let mut candidates = Vec::new();
    for code in 0..3usize.pow(n_groups as u32) {
        let mut weight = 1.0;
        let mut results = Vec::with_capacity(n_groups);
        let mut prev = task.first();
        let mut c = code;
        // Most significant trit is step 1, so enumeration order is
        // lexicographic in (e_1, …, e_{m-1}) with 0 < +1 < -1.
        let mut errors = vec![0usize; n_groups];
        for e in errors.iter_mut().rev() {
            *e = c % 3;
            c /= 3;
        }
        for (&(op, d), &e) in task.steps().iter().zip(&errors) {
            let exact = op.apply(prev, d);
            let r = match e {
                0 => exact,
                1 => (exact + 1) % 10,
                _ => (exact + 9) % 10,
            };
            weight *= per_step[e];
            results.push(r);
            prev = r;
        }
        if weight <= 0.0 {
            continue;
        }
        for &offset in &offsets {
            let tokens = render_candidate(&template, spec, &results, options.pad_variants.then_some(offset));
            candidates.push(Candidate {
                tokens,
                weight: weight / offsets.len() as f64,
                results: results.clone(),
                offset,
            });
        }
    }

    let total: f64 = candidates.iter().map(|c| c.weight).sum();
    debug_assert!((total - 1.0).abs() < WEIGHT_TOLERANCE, "weights sum to {total}");
    Ok(CandidateSet { candidates, eps, len: template.len() })
}

fn group(step: usize, r: u8) -> [TokenId; GROUP_LEN] {
    [TokenId::var(step), TokenId::EQ, TokenId::digit(r), TokenId::SEMI]
}

/// `floating` carries the block offset when pad variants are enabled.
fn render_candidate(
    template: &SequenceState,
    spec: &LayoutSpec,
    results: &[u8],
    floating: Option<usize>,
) -> Vec<TokenId> {
    let mut tokens = template.tokens().to_vec();
    let answer = *results.last().expect("m >= 2");
    let block: Vec<TokenId> = results.iter().enumerate().flat_map(|(i, &r)| group(i + 1, r)).collect();
    let fill = |tokens: &mut Vec<TokenId>, positions: &[usize], content: &[TokenId], at: usize| {
        for (j, &p) in positions.iter().enumerate() {
            tokens[p] = if j >= at && j - at < content.len() { content[j - at] } else { TokenId::PAD };
        }
    };

    match spec.rung {
        LayoutRung::Structured => {
            for sec in template.sections() {
                if let SectionKind::ThinkingSlot(step) = sec.kind {
                    let positions: Vec<usize> = sec.positions().collect();
                    let content: Vec<TokenId> =
                        results.get(step as usize - 1).map(|&r| group(step as usize, r).to_vec()).unwrap_or_default();
                    fill(&mut tokens, &positions, &content, 0);
                }
            }
        }
        LayoutRung::Segment => {
            let positions = template.positions_where(SectionKind::is_thinking_slot);
            fill(&mut tokens, &positions, &block, floating.unwrap_or(0));
        }
        LayoutRung::Vanilla => {
            let positions = template.positions_where(|k| k == SectionKind::Generation);
            match floating {
                Some(offset) => {
                    let mut content = block;
                    content.push(TokenId::digit(answer));
                    fill(&mut tokens, &positions, &content, offset);
                }
                None => {
                    // Block, PAD up to the thinking budget, then the answer.
                    let (thinking, answer_part) = positions.split_at(spec.total_thinking_budget);
                    fill(&mut tokens, thinking, &block, 0);
                    fill(&mut tokens, answer_part, &[TokenId::digit(answer)], 0);
                }
            }
            return tokens;
        }
    }
    let answer_positions = template.positions_where(|k| k == SectionKind::Answer);
    fill(&mut tokens, &answer_positions, &[TokenId::digit(answer)], 0);
    tokens
}

/// Exact posterior marginals of the clean sequence given `state`.
pub fn oracle_conditional(candidates: &CandidateSet, state: &SequenceState) -> Result<PredictorOutput> {
    if state.len() != candidates.seq_len() {
        return Err(IceError::Shape { expected: candidates.seq_len(), actual: state.len() });
    }
    let v = SYNTHETIC_VOCAB_SIZE;
    let mut probs = vec![0.0; state.len() * v];
    let mut total = 0.0;
    for cand in candidates.consistent(state) {
        total += cand.weight;
        for (pos, tok) in cand.tokens.iter().enumerate() {
            probs[pos * v + tok.index()] += cand.weight;
        }
    }
    if total <= 0.0 {
        return Err(IceError::InconsistentState);
    }
    for p in &mut probs {
        *p /= total;
    }
    PredictorOutput::new(probs, v)
}

/// [`Predictor`] backed by [`oracle_conditional`].
#[derive(Clone, Debug)]
pub struct OraclePredictor {
    candidates: CandidateSet,
}

impl OraclePredictor {
    pub fn new(candidates: CandidateSet) -> Self {
        Self { candidates }
    }

    pub fn for_task(task: &ChainArithTask, spec: &LayoutSpec, eps: f64, options: CandidateOptions) -> Result<Self> {
        enumerate_candidates_with(task, spec, eps, options).map(Self::new)
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    /// Number of candidates agreeing with `state`.
    pub fn consistent_count(&self, state: &SequenceState) -> usize {
        self.candidates.consistent(state).count()
    }
}

impl Predictor for OraclePredictor {
    fn vocab_size(&self) -> usize {
        SYNTHETIC_VOCAB_SIZE
    }

    fn predict(&self, state: &SequenceState) -> Result<PredictorOutput> {
        oracle_conditional(&self.candidates, state)
    }
}
