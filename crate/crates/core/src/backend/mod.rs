//! Completion and scoring backends.
//!
//! Samplers implement [`CompletionProvider`]; the two shipped providers are
//! an OpenAI-compatible HTTP client ([`http::HttpProvider`]) and a
//! deterministic simulator ([`sim::SimProvider`]) that makes every pipeline
//! reproducible offline. Scoring backends implement [`StepScorer`]. Both
//! report usage into a shared [`CostLedger`] so provider-side counters can
//! be reconciled exactly against what the pipeline believes it spent.

pub mod http;
pub mod retry;
pub mod scorer;
pub mod sim;
pub mod stub;

pub use scorer::{StepScoreVector, StepScorer};

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::model::{
    extract_final_answer, split_into_steps, ModelError, SampledSolution, TokenRecord,
};

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("sampling request asks for {n} completions; at least 1 is required")]
    ZeroCompletions { n: usize },
    #[error("provider unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("provider response is missing token logprobs")]
    MissingLogprobs,
    #[error("provider returned {got} completions, expected {expected}")]
    CompletionCount { got: usize, expected: usize },
    #[error("scorer returned {got} scores for {expected} steps")]
    ScoreCardinality { got: usize, expected: usize },
    #[error("step score {value} at position {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("score vector is empty")]
    EmptyScores,
    #[error("oracle scorer needs reference labels for an unverified or incorrect solution")]
    OracleNeedsLabels,
    #[error("prefix does not match any simulated question")]
    UnknownQuestion,
    #[error("prefix commits {depth} steps but the simulated question has {steps}")]
    PrefixTooDeep { depth: usize, steps: usize },
    #[error("invalid simulated world: {0}")]
    InvalidWorld(String),
    #[error("http transport: {0}")]
    Transport(String),
    #[error("failed to parse provider response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A request for `n` completions continuing from `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingRequest {
    pub prefix: String,
    pub n: usize,
    pub temperature: f64,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingRequest {
    /// Default decoding settings: temperature 0.8, 1024-token budget.
    pub fn new(prefix: impl Into<String>, n: usize) -> Result<Self, BackendError> {
        if n == 0 {
            return Err(BackendError::ZeroCompletions { n });
        }
        Ok(SamplingRequest {
            prefix: prefix.into(),
            n,
            temperature: 0.8,
            max_tokens: 1024,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

/// Sources of sampled solutions. Implementations must be thread-safe; the
/// pipeline may sample from several threads.
pub trait CompletionProvider: Send + Sync {
    /// Samples `request.n` completions and converts each into a solution
    /// (steps split, final answer extracted). Implementations record every
    /// received completion and its exact token count in `ledger`.
    fn sample(
        &self,
        request: &SamplingRequest,
        ledger: &CostLedger,
    ) -> Result<Vec<SampledSolution>, BackendError>;

    /// Tag stamped into `generator_tag` of produced solutions.
    fn tag(&self) -> &str;
}

/// Thread-safe running totals of what a pipeline run has spent.
///
/// `verified_steps` counts candidate error steps probed during annotation;
/// `sampled_completions` and `generated_tokens` count completions and tokens
/// observed at the provider boundary.
#[derive(Debug, Default)]
pub struct CostLedger {
    verified_steps: AtomicU64,
    sampled_completions: AtomicU64,
    generated_tokens: AtomicU64,
}

impl CostLedger {
    pub fn new() -> Self {
        CostLedger::default()
    }

    pub fn add_verified_steps(&self, n: u64) {
        self.verified_steps.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_completions(&self, n: u64) {
        self.sampled_completions.fetch_add(n, Ordering::Relaxed);
    }

    pub fn add_tokens(&self, n: u64) {
        self.generated_tokens.fetch_add(n, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> CostSnapshot {
        CostSnapshot {
            verified_steps: self.verified_steps.load(Ordering::Relaxed),
            sampled_completions: self.sampled_completions.load(Ordering::Relaxed),
            generated_tokens: self.generated_tokens.load(Ordering::Relaxed),
        }
    }
}

/// Serializable point-in-time view of a [`CostLedger`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostSnapshot {
    pub verified_steps: u64,
    pub sampled_completions: u64,
    pub generated_tokens: u64,
}

/// One raw completion at the provider boundary: text plus aligned tokens.
#[derive(Debug, Clone)]
pub struct RawCompletion {
    pub text: String,
    pub tokens: Vec<TokenRecord>,
}

impl RawCompletion {
    /// Builds a completion whose text is the concatenation of token texts.
    pub fn from_tokens(tokens: Vec<TokenRecord>) -> Self {
        let text = tokens.iter().map(|t| t.text.as_str()).collect();
        RawCompletion { text, tokens }
    }
}

/// Converts a raw completion into a solution: steps split, final answer
/// extracted. A completion that cannot be split (blank text) becomes a
/// format-invalid solution with no steps rather than an error, so one bad
/// sample cannot sink a batch.
pub fn completion_to_solution(
    question_id: &str,
    generator_tag: &str,
    completion: &RawCompletion,
) -> SampledSolution {
    let steps = match split_into_steps(&completion.text, &completion.tokens) {
        Ok(steps) => steps,
        Err(_) => Vec::new(),
    };
    let final_answer = extract_final_answer(&completion.text);
    SampledSolution {
        question_id: question_id.to_string(),
        generator_tag: generator_tag.to_string(),
        final_answer,
        is_correct: None,
        sequence_uncertainty: None,
        steps,
    }
}
