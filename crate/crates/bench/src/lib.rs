//! Fixtures shared by the criterion benches.

use ice_core::{
    build_layout, Allocation, CandidateOptions, ChainArithTask, LayoutRung, LayoutSpec, Op, OraclePredictor,
    SequenceState,
};

/// A fixed chain of `m` assignments.
pub fn chain(m: usize) -> ChainArithTask {
    let ops = [Op::Add, Op::Mul, Op::Sub, Op::Add, Op::Mul];
    ChainArithTask::new(3, (1..m).map(|i| (ops[i - 1], (i as u8 * 3) % 10)).collect()).expect("m within range")
}

pub struct Fixture {
    pub spec: LayoutSpec,
    pub state: SequenceState,
    pub oracle: OraclePredictor,
}

/// Layout with one thinking step per assignment and four slots each.
pub fn fixture(m: usize, eps: f64, rung: LayoutRung, answer_len: usize) -> Fixture {
    let task = chain(m);
    let spec = LayoutSpec {
        n_thinking_steps: m - 1,
        total_thinking_budget: 4 * (m - 1),
        allocation: Allocation::Uniform,
        answer_len,
        rung,
    };
    let oracle = OraclePredictor::for_task(&task, &spec, eps, CandidateOptions::default()).expect("compatible layout");
    let state = build_layout(&task.prompt_tokens(), &spec).expect("valid layout");
    Fixture { spec, state, oracle }
}
