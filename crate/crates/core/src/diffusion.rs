//! Forward masking process and the Monte-Carlo NELBO estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IceError, Result};
use crate::layout::SequenceState;
use crate::predictor::Predictor;
use crate::vocab::TokenId;

/// Lower truncation of the sampled time, keeping the `1/t` weight finite.
pub const T_MIN: f64 = 1e-3;

/// Retention schedule `alpha(t)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseSchedule {
    /// `alpha(t) = 1 - t`
    #[default]
    Linear,
}

impl NoiseSchedule {
    pub fn alpha(self, t: f64) -> f64 {
        match self {
            NoiseSchedule::Linear => 1.0 - t,
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(IceError::Domain { value: t, domain: "[0, 1]" })
    }
}

/// Masks each position independently with probability `1 - alpha(t)`.
pub fn corrupt(x0: &[TokenId], t: f64, schedule: NoiseSchedule, mask: TokenId, seed: u64) -> Result<Vec<TokenId>> {
    check_time(t)?;
    if x0.contains(&mask) {
        return Err(IceError::InvalidInput("clean sequence contains MASK".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(corrupt_with(x0, t, schedule, mask, &mut rng))
}

fn corrupt_with<R: Rng>(x0: &[TokenId], t: f64, schedule: NoiseSchedule, mask: TokenId, rng: &mut R) -> Vec<TokenId> {
    let p_mask = 1.0 - schedule.alpha(t);
    x0.iter().map(|&tok| if rng.gen::<f64>() < p_mask { mask } else { tok }).collect()
}

/// Monte-Carlo estimate in nats, with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelboEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Estimates `-E[(1/t) Σ_k 1[x_t^k = MASK] log f(x_0^k | x_t)]` with
/// `t ~ U[T_MIN, 1)`.
///
/// A zero probability on a true token yields an infinite estimate.
pub fn nelbo_estimate<P: Predictor + ?Sized>(
    predictor: &P,
    x0: &[TokenId],
    mask: TokenId,
    n_samples: usize,
    seed: u64,
) -> Result<NelboEstimate> {
    if n_samples == 0 {
        return Err(IceError::Precondition("n_samples must be at least 1".into()));
    }
    if x0.contains(&mask) {
        return Err(IceError::InvalidInput("clean sequence contains MASK".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let t = rng.gen_range(T_MIN..1.0);
        let xt = corrupt_with(x0, t, NoiseSchedule::Linear, mask, &mut rng);
        let state = SequenceState::unstructured(xt, mask);
        let out = predictor.predict(&state)?;
        let mut nll = 0.0;
        for (k, &tok) in x0.iter().enumerate() {
            if state.is_masked(k) {
                nll -= out.prob(k, tok.index()).ln();
            }
        }
        samples.push(nll / t);
    }

    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return Ok(NelboEstimate { mean: f64::INFINITY, std_error: f64::INFINITY });
    }
    let std_error = if samples.len() > 1 {
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(NelboEstimate { mean, std_error })
}
