//! Sequence state and the in-place layout of prompt, thinking, indicator and
//! answer sections.

use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};
use crate::vocab::TokenId;

/// Role of a span of positions in the sequence.
///
/// `ThinkingSlot(0)` denotes the single undivided thinking span of a
/// segment-only layout; structured layouts number their steps from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "step")]
pub enum SectionKind {
    Prompt,
    ThinkingTemplate(u16),
    ThinkingSlot(u16),
    Indicator,
    Answer,
    /// Undifferentiated generation span of a vanilla layout.
    Generation,
}

impl SectionKind {
    pub fn is_thinking_slot(self) -> bool {
        matches!(self, SectionKind::ThinkingSlot(_))
    }

    /// Positions of this kind start out masked.
    pub fn is_maskable(self) -> bool {
        matches!(self, SectionKind::ThinkingSlot(_) | SectionKind::Answer | SectionKind::Generation)
    }
}

/// A half-open span `[start, end)` tagged with its role.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    pub start: usize,
    pub end: usize,
}

impl Section {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Which structural elements a layout emits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutRung {
    /// Prompt followed by one masked generation span.
    Vanilla,
    /// Undivided thinking span, answer indicator, answer span.
    Segment,
    /// Per-step templates with their own slot budgets, indicator, answer.
    Structured,
}

/// How the thinking budget is split over the reasoning steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    Uniform,
    #[serde(alias = "front")]
    FrontHeavy,
    #[serde(alias = "back")]
    BackHeavy,
}

/// Structural recipe for the generation region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutSpec {
    pub n_thinking_steps: usize,
    pub total_thinking_budget: usize,
    pub allocation: Allocation,
    pub answer_len: usize,
    pub rung: LayoutRung,
}

/// Template step numbers are single digits starting at 1.
pub const MAX_THINKING_STEPS: usize = 9;

impl LayoutSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_thinking_steps == 0 {
            return Err(IceError::InvalidLayout("at least one thinking step required".into()));
        }
        if self.n_thinking_steps > MAX_THINKING_STEPS {
            return Err(IceError::InvalidLayout(format!(
                "{} thinking steps exceed the template limit of {MAX_THINKING_STEPS}",
                self.n_thinking_steps
            )));
        }
        if self.total_thinking_budget < self.n_thinking_steps {
            return Err(IceError::InvalidLayout(format!(
                "budget {} < {} thinking steps",
                self.total_thinking_budget, self.n_thinking_steps
            )));
        }
        if self.answer_len == 0 {
            return Err(IceError::InvalidLayout("answer length must be positive".into()));
        }
        Ok(())
    }

    /// Masked positions in the generation region.
    pub fn generation_masked_len(&self) -> usize {
        self.total_thinking_budget + self.answer_len
    }

    pub fn step_budgets(&self) -> Result<Vec<usize>> {
        allocate_masks(self.allocation, self.n_thinking_steps, self.total_thinking_budget)
    }
}

/// Splits `total` mask slots over `n_steps` steps.
///
/// Proportional strategies use largest-remainder rounding with ties going to
/// the lower index; any step left empty then borrows one slot from the
/// largest step so every step keeps at least one slot.
pub fn allocate_masks(strategy: Allocation, n_steps: usize, total: usize) -> Result<Vec<usize>> {
    if n_steps == 0 || total < n_steps {
        return Err(IceError::InvalidBudget { total, steps: n_steps });
    }
    if strategy == Allocation::Uniform {
        let base = total / n_steps;
        let extra = total % n_steps;
        return Ok((0..n_steps).map(|i| base + usize::from(i < extra)).collect());
    }

    let weights: Vec<usize> = match strategy {
        Allocation::FrontHeavy => (0..n_steps).map(|i| n_steps - i).collect(),
        Allocation::BackHeavy => (1..=n_steps).collect(),
        Allocation::Uniform => unreachable!(),
    };
    let weight_sum: usize = weights.iter().sum();
    // Exact integer arithmetic: quota_i = total * w_i / W.
    let mut budgets: Vec<usize> = weights.iter().map(|w| total * w / weight_sum).collect();
    let mut remainders: Vec<(usize, usize)> =
        weights.iter().enumerate().map(|(i, w)| (total * w % weight_sum, i)).collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = budgets.iter().sum();
    for &(_, i) in remainders.iter().take(total - assigned) {
        budgets[i] += 1;
    }

    // Fill empty steps from the light end, borrowing from the innermost maximum.
    loop {
        let empty = match strategy {
            Allocation::BackHeavy => budgets.iter().rposition(|&b| b == 0),
            _ => budgets.iter().position(|&b| b == 0),
        };
        let Some(empty) = empty else { break };
        let max = *budgets.iter().max().expect("non-empty");
        let donor = match strategy {
            Allocation::BackHeavy => budgets.iter().position(|&b| b == max),
            _ => budgets.iter().rposition(|&b| b == max),
        }
        .expect("max exists");
        budgets[donor] -= 1;
        budgets[empty] = 1;
    }
    Ok(budgets)
}

/// A token sequence with per-position mask flags and a section map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceState {
    tokens: Vec<TokenId>,
    masked: Vec<bool>,
    sections: Vec<Section>,
    section_of: Vec<usize>,
    rung: LayoutRung,
    mask: TokenId,
    /// Refinement step index `k`, counting down towards zero.
    pub step_index: usize,
}

impl SequenceState {
    fn from_parts(tokens: Vec<TokenId>, sections: Vec<Section>, rung: LayoutRung, mask: TokenId) -> Self {
        let masked = tokens.iter().map(|&t| t == mask).collect();
        let mut section_of = vec![0; tokens.len()];
        for (si, s) in sections.iter().enumerate() {
            for p in s.positions() {
                section_of[p] = si;
            }
        }
        Self { tokens, masked, sections, section_of, rung, mask, step_index: 0 }
    }

    /// A state with no structure: one `Generation` section spanning the
    /// whole sequence. Used for corrupted training sequences.
    pub fn unstructured(tokens: Vec<TokenId>, mask: TokenId) -> Self {
        let sections = vec![Section { kind: SectionKind::Generation, start: 0, end: tokens.len() }];
        Self::from_parts(tokens, sections, LayoutRung::Vanilla, mask)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn masked(&self) -> &[bool] {
        &self.masked
    }

    pub fn is_masked(&self, pos: usize) -> bool {
        self.masked[pos]
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn rung(&self) -> LayoutRung {
        self.rung
    }

    pub fn mask_token(&self) -> TokenId {
        self.mask
    }

    pub fn kind_at(&self, pos: usize) -> SectionKind {
        self.sections[self.section_of[pos]].kind
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.masked.iter().any(|&m| m)
    }

    /// Ascending positions whose section satisfies `pred`.
    pub fn positions_where(&self, pred: impl Fn(SectionKind) -> bool) -> Vec<usize> {
        self.sections.iter().filter(|s| pred(s.kind)).flat_map(Section::positions).collect()
    }

    /// Ascending masked positions whose section satisfies `pred`.
    pub fn masked_positions_where(&self, pred: impl Fn(SectionKind) -> bool) -> Vec<usize> {
        self.positions_where(pred).into_iter().filter(|&p| self.masked[p]).collect()
    }

    /// Writes `token` into a masked position.
    pub(crate) fn unmask(&mut self, pos: usize, token: TokenId) {
        debug_assert!(self.masked[pos], "position {pos} already unmasked");
        debug_assert_ne!(token, self.mask);
        self.tokens[pos] = token;
        self.masked[pos] = false;
    }
}

/// Positions of sections whose kind equals `kind`, ascending.
pub fn section_positions(state: &SequenceState, kind: SectionKind) -> Vec<usize> {
    state.positions_where(|k| k == kind)
}

struct LayoutBuilder {
    tokens: Vec<TokenId>,
    sections: Vec<Section>,
}

impl LayoutBuilder {
    fn push(&mut self, kind: SectionKind, tokens: impl IntoIterator<Item = TokenId>) {
        let start = self.tokens.len();
        self.tokens.extend(tokens);
        self.sections.push(Section { kind, start, end: self.tokens.len() });
    }

    fn push_masked(&mut self, kind: SectionKind, n: usize) {
        self.push(kind, std::iter::repeat_n(TokenId::MASK, n));
    }
}

/// Builds the initial, fully masked generation state `y^(N)`.
pub fn build_layout(prompt_tokens: &[TokenId], spec: &LayoutSpec) -> Result<SequenceState> {
    if prompt_tokens.is_empty() {
        return Err(IceError::InvalidInput("prompt is empty".into()));
    }
    if prompt_tokens.contains(&TokenId::MASK) {
        return Err(IceError::InvalidInput("prompt contains MASK".into()));
    }
    spec.validate()?;

    let mut b = LayoutBuilder { tokens: Vec::new(), sections: Vec::new() };
    b.push(SectionKind::Prompt, prompt_tokens.iter().copied());
    match spec.rung {
        LayoutRung::Vanilla => {
            b.push_masked(SectionKind::Generation, spec.generation_masked_len());
        }
        LayoutRung::Segment => {
            b.push_masked(SectionKind::ThinkingSlot(0), spec.total_thinking_budget);
            b.push(SectionKind::Indicator, [TokenId::ANS]);
            b.push_masked(SectionKind::Answer, spec.answer_len);
        }
        LayoutRung::Structured => {
            for (i, budget) in spec.step_budgets()?.into_iter().enumerate() {
                let step = (i + 1) as u16;
                b.push(SectionKind::ThinkingTemplate(step), [TokenId::STEP, TokenId::digit(step as u8)]);
                b.push_masked(SectionKind::ThinkingSlot(step), budget);
            }
            b.push(SectionKind::Indicator, [TokenId::ANS]);
            b.push_masked(SectionKind::Answer, spec.answer_len);
        }
    }
    Ok(SequenceState::from_parts(b.tokens, b.sections, spec.rung, TokenId::MASK))
}
