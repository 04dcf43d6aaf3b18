//! The bidirectional predictor contract and its concrete implementations.

mod oracle;
mod task;

pub use oracle::{
    enumerate_candidates, enumerate_candidates_with, oracle_conditional, Candidate, CandidateOptions, CandidateSet,
    OraclePredictor,
};
pub use task::{ChainArithTask, Op};

use crate::error::{IceError, Result};
use crate::layout::SequenceState;

const SUM_TOLERANCE: f64 = 1e-9;

/// Per-position probability vectors over the vocabulary, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorOutput {
    probs: Vec<f64>,
    vocab_size: usize,
}

impl PredictorOutput {
    /// Wraps a row-major `len × vocab_size` matrix, checking each row is a
    /// probability vector.
    pub fn new(probs: Vec<f64>, vocab_size: usize) -> Result<Self> {
        if vocab_size == 0 || !probs.len().is_multiple_of(vocab_size) {
            return Err(IceError::Shape { expected: vocab_size, actual: probs.len() });
        }
        for (i, row) in probs.chunks(vocab_size).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p.is_nan() || p < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(IceError::InvalidInput(format!("position {i} is not a distribution (sum {sum})")));
            }
        }
        Ok(Self { probs, vocab_size })
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn row(&self, pos: usize) -> &[f64] {
        &self.probs[pos * self.vocab_size..(pos + 1) * self.vocab_size]
    }

    pub fn prob(&self, pos: usize, token: usize) -> f64 {
        self.row(pos)[token]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.vocab_size)
    }
}

/// `f_θ(y_0 | y^(k))`: distributions over the clean sequence at every
/// position given a partially masked state.
///
/// Implementations are read-only after construction and shared across
/// concurrent decodes.
pub trait Predictor: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn predict(&self, state: &SequenceState) -> Result<PredictorOutput>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn predict(&self, state: &SequenceState) -> Result<PredictorOutput> {
        (**self).predict(state)
    }
}

/// Assigns `1/|V|` to every token at every position.
#[derive(Clone, Copy, Debug)]
pub struct UniformPredictor {
    vocab_size: usize,
}

impl UniformPredictor {
    pub fn new(vocab_size: usize) -> Self {
        assert!(vocab_size > 0);
        Self { vocab_size }
    }
}

impl Predictor for UniformPredictor {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn predict(&self, state: &SequenceState) -> Result<PredictorOutput> {
        let p = 1.0 / self.vocab_size as f64;
        PredictorOutput::new(vec![p; state.len() * self.vocab_size], self.vocab_size)
    }
}
