//! Sequence- and step-level uncertainty from token log-probabilities.
//!
//! The uncertainty of a token sequence treats its logprobs as unnormalized
//! scores: softmax them into a distribution z and take the Shannon entropy
//! -sum(z_i * ln z_i). Per-step uncertainties feed the delta signal that
//! ranks candidate error steps: a step whose uncertainty jumps relative to
//! its predecessor is where the generator started guessing.

use crate::model::{SampledSolution, LOGPROB_FLOOR};

#[derive(Debug, thiserror::Error)]
pub enum UncertaintyError {
    #[error("token sequence is empty")]
    EmptySequence,
    #[error("logprob at position {index} is not finite")]
    NonFinite { index: usize },
    #[error("step {index} owns no tokens")]
    EmptyStep { index: usize },
    #[error("logprob at position {index} is positive ({value}); perplexity needs log-probabilities <= 0")]
    PositiveLogprob { index: usize, value: f64 },
}

/// Softmax of a logprob vector. Values are floored at [`LOGPROB_FLOOR`];
/// NaN or +inf anywhere is an error. The result sums to 1 within 1e-12 and
/// is invariant to shifting the input vector by a constant.
pub fn softmax_probs(logprobs: &[f64]) -> Result<Vec<f64>, UncertaintyError> {
    if logprobs.is_empty() {
        return Err(UncertaintyError::EmptySequence);
    }
    let mut floored = Vec::with_capacity(logprobs.len());
    for (index, &lp) in logprobs.iter().enumerate() {
        if lp.is_nan() || lp == f64::INFINITY {
            return Err(UncertaintyError::NonFinite { index });
        }
        floored.push(lp.max(LOGPROB_FLOOR));
    }

    let max = floored.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = floored.iter().map(|&lp| (lp - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Entropy of the softmax distribution over a token sequence, in nats.
/// Bounded by [0, ln(n)] for n tokens; a single token yields exactly 0.
pub fn sequence_entropy(logprobs: &[f64]) -> Result<f64, UncertaintyError> {
    let probs = softmax_probs(logprobs)?;
    let mut entropy = 0.0;
    for z in probs {
        if z > 0.0 {
            entropy -= z * z.ln();
        }
    }
    // Clamp the tiny negative values float error can produce at the
    // deterministic-distribution limit.
    Ok(entropy.max(0.0))
}

/// Entropy scaled into [0, 1] by its ln(n) maximum; 0 for a single token.
pub fn normalized_entropy(logprobs: &[f64]) -> Result<f64, UncertaintyError> {
    let u = sequence_entropy(logprobs)?;
    if logprobs.len() < 2 {
        return Ok(0.0);
    }
    Ok(u / (logprobs.len() as f64).ln())
}

/// Mean negative log-probability: ln of the sequence perplexity. Kept
/// separate from [`perplexity`] so ratios of log-perplexities avoid the
/// exp/ln round trip. Requires logprobs <= 0.
pub fn log_perplexity(logprobs: &[f64]) -> Result<f64, UncertaintyError> {
    if logprobs.is_empty() {
        return Err(UncertaintyError::EmptySequence);
    }
    let mut sum = 0.0;
    for (index, &lp) in logprobs.iter().enumerate() {
        if lp.is_nan() || lp == f64::INFINITY {
            return Err(UncertaintyError::NonFinite { index });
        }
        if lp > 0.0 {
            return Err(UncertaintyError::PositiveLogprob { index, value: lp });
        }
        sum += lp.max(LOGPROB_FLOOR);
    }
    Ok(-sum / logprobs.len() as f64)
}

/// Perplexity exp(-(1/L) * sum(logprobs)). Always >= 1 for valid inputs.
pub fn perplexity(logprobs: &[f64]) -> Result<f64, UncertaintyError> {
    Ok(log_perplexity(logprobs)?.exp())
}

/// Which tokens feed each step's uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEntropyScope {
    /// Entropy over the step's own tokens (default).
    OwnTokens,
    /// Entropy over all tokens from the start of the solution through the
    /// step, measuring cumulative drift instead of local spikes.
    Prefix,
}

/// Per-step uncertainties and the deltas between consecutive steps.
#[derive(Debug, Clone)]
pub struct UncertaintyProfile {
    /// Entropy over the whole token sequence.
    pub sequence: f64,
    /// u(s_t) for each step, in step order.
    pub per_step: Vec<f64>,
    /// (step_index, u(s_t) - u(s_{t-1})) for t = 2..=T, in step order.
    pub deltas: Vec<(usize, f64)>,
}

impl UncertaintyProfile {
    /// Step indices ordered by descending delta; ties break toward the
    /// earlier step. Only steps 2..=T have a delta.
    pub fn steps_by_delta_desc(&self) -> Vec<usize> {
        let mut order = self.deltas.clone();
        order.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        order.into_iter().map(|(idx, _)| idx).collect()
    }
}

/// Computes the uncertainty profile of a solution with each step measured
/// over its own tokens.
pub fn step_uncertainties(solution: &SampledSolution) -> Result<UncertaintyProfile, UncertaintyError> {
    step_uncertainties_with(solution, StepEntropyScope::OwnTokens)
}

/// Computes the uncertainty profile under an explicit token scope.
pub fn step_uncertainties_with(
    solution: &SampledSolution,
    scope: StepEntropyScope,
) -> Result<UncertaintyProfile, UncertaintyError> {
    if solution.steps.is_empty() {
        return Err(UncertaintyError::EmptySequence);
    }

    let mut per_step = Vec::with_capacity(solution.steps.len());
    let mut prefix: Vec<f64> = Vec::new();
    for step in &solution.steps {
        if step.tokens.is_empty() {
            return Err(UncertaintyError::EmptyStep { index: step.index });
        }
        let own: Vec<f64> = step.tokens.iter().map(|t| t.logprob).collect();
        let u = match scope {
            StepEntropyScope::OwnTokens => sequence_entropy(&own)?,
            StepEntropyScope::Prefix => {
                prefix.extend_from_slice(&own);
                sequence_entropy(&prefix)?
            }
        };
        per_step.push(u);
    }

    let sequence = sequence_entropy(&solution.all_logprobs())?;
    let deltas = per_step
        .windows(2)
        .enumerate()
        .map(|(i, w)| (i + 2, w[1] - w[0]))
        .collect();

    Ok(UncertaintyProfile {
        sequence,
        per_step,
        deltas,
    })
}
