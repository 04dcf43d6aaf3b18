//! A second, deliberately naive implementation of the oracle posterior used
//! to cross-check the library. It shares only the layout builder and the
//! token ids with the code under test.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ice_core::{
    build_layout, ChainArithTask, LayoutRung, LayoutSpec, Op, Predictor, PredictorOutput, Result, SectionKind,
    SequenceState, TokenId, SYNTHETIC_VOCAB_SIZE,
};

pub struct RefCandidate {
    pub tokens: Vec<TokenId>,
    pub weight: f64,
}

fn apply(op: Op, a: u8, b: u8) -> u8 {
    match op {
        Op::Add => (a + b) % 10,
        Op::Sub => (a + 10 - b) % 10,
        Op::Mul => (a * b) % 10,
    }
}

/// Every chain of noisy intermediate results with its probability.
fn chains(task: &ChainArithTask, eps: f64) -> Vec<(Vec<u8>, f64)> {
    let mut out = vec![(Vec::new(), 1.0)];
    for &(op, d) in task.steps() {
        let mut next = Vec::new();
        for (rs, w) in &out {
            let prev = rs.last().copied().unwrap_or(task.first());
            let exact = apply(op, prev, d);
            for (shift, p) in [(0u8, 1.0 - eps), (1, eps / 2.0), (9, eps / 2.0)] {
                if p > 0.0 {
                    let mut r = rs.clone();
                    r.push((exact + shift) % 10);
                    next.push((r, w * p));
                }
            }
        }
        out = next;
    }
    out
}

fn place(tokens: &mut [TokenId], positions: &[usize], content: &[TokenId], offset: usize) {
    for p in positions {
        tokens[*p] = TokenId::PAD;
    }
    for (j, t) in content.iter().enumerate() {
        tokens[positions[offset + j]] = *t;
    }
}

fn positions_of(state: &SequenceState, f: impl Fn(SectionKind) -> bool) -> Vec<usize> {
    (0..state.len()).filter(|&p| f(state.kind_at(p))).collect()
}

pub fn reference_candidates(
    task: &ChainArithTask,
    spec: &LayoutSpec,
    eps: f64,
    pad_variants: bool,
) -> Vec<RefCandidate> {
    let template = build_layout(&task.prompt_tokens(), spec).expect("valid layout");
    let answer_pos = positions_of(&template, |k| k == SectionKind::Answer);
    let mut out = Vec::new();
    for (rs, w) in chains(task, eps) {
        let answer = TokenId::digit(*rs.last().unwrap());
        let group = |i: usize| vec![TokenId::var(i), TokenId::EQ, TokenId::digit(rs[i - 1]), TokenId::SEMI];
        let block: Vec<TokenId> = (1..=rs.len()).flat_map(group).collect();
        let mut variants: Vec<Vec<TokenId>> = Vec::new();
        match spec.rung {
            LayoutRung::Structured => {
                let mut t = template.tokens().to_vec();
                for s in 1..=spec.n_thinking_steps {
                    let slots = positions_of(&template, |k| k == SectionKind::ThinkingSlot(s as u16));
                    let content = if s <= rs.len() { group(s) } else { Vec::new() };
                    place(&mut t, &slots, &content, 0);
                }
                variants.push(t);
            }
            LayoutRung::Segment => {
                let slots = positions_of(&template, |k| k == SectionKind::ThinkingSlot(0));
                let last = if pad_variants { slots.len() - block.len() } else { 0 };
                for offset in 0..=last {
                    let mut t = template.tokens().to_vec();
                    place(&mut t, &slots, &block, offset);
                    variants.push(t);
                }
            }
            LayoutRung::Vanilla => {
                let gen = positions_of(&template, |k| k == SectionKind::Generation);
                if pad_variants {
                    let mut content = block.clone();
                    content.push(answer);
                    for offset in 0..=gen.len() - content.len() {
                        let mut t = template.tokens().to_vec();
                        place(&mut t, &gen, &content, offset);
                        variants.push(t);
                    }
                } else {
                    let mut t = template.tokens().to_vec();
                    let budget = spec.total_thinking_budget;
                    place(&mut t, &gen[..budget], &block, 0);
                    place(&mut t, &gen[budget..], &[answer], 0);
                    variants.push(t);
                }
            }
        }
        let share = w / variants.len() as f64;
        for mut t in variants {
            if !answer_pos.is_empty() {
                place(&mut t, &answer_pos, &[answer], 0);
            }
            out.push(RefCandidate { tokens: t, weight: share });
        }
    }
    out
}

/// Posterior marginals, row-major `[position][token]`.
pub fn reference_marginals(cands: &[RefCandidate], state: &SequenceState) -> Vec<f64> {
    let consistent: Vec<&RefCandidate> = cands
        .iter()
        .filter(|c| (0..state.len()).all(|p| state.is_masked(p) || c.tokens[p] == state.tokens()[p]))
        .collect();
    let total: f64 = consistent.iter().map(|c| c.weight).sum();
    let mut probs = vec![0.0; state.len() * SYNTHETIC_VOCAB_SIZE];
    for c in consistent {
        let post = c.weight / total;
        for (p, t) in c.tokens.iter().enumerate() {
            probs[p * SYNTHETIC_VOCAB_SIZE + t.index()] += post;
        }
    }
    probs
}

/// Forwards to `inner` and compares each output with the reference.
pub struct Checking<P> {
    pub inner: P,
    pub reference: Vec<RefCandidate>,
    pub max_err: Mutex<f64>,
    pub states: AtomicUsize,
}

impl<P> Checking<P> {
    pub fn new(inner: P, reference: Vec<RefCandidate>) -> Self {
        Self { inner, reference, max_err: Mutex::new(0.0), states: AtomicUsize::new(0) }
    }

    pub fn max_err(&self) -> f64 {
        *self.max_err.lock().unwrap()
    }
}

impl<P: Predictor> Predictor for Checking<P> {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn predict(&self, state: &SequenceState) -> Result<PredictorOutput> {
        let out = self.inner.predict(state)?;
        let expected = reference_marginals(&self.reference, state);
        let err = out.rows().flatten().zip(&expected).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut m = self.max_err.lock().unwrap();
        *m = m.max(err);
        self.states.fetch_add(1, Ordering::Relaxed);
        Ok(out)
    }
}
