//! Step-level process-reward training data and multi-sample answer
//! aggregation.
//!
//! The pipeline samples candidate solutions for math questions, locates the
//! first erroneous step of incorrect solutions with uncertainty-guided
//! Monte Carlo verification, and exports step-labeled training records. On
//! the inference side it aggregates multi-sample answers by majority vote,
//! reward-model best-of-n, a hybrid of the two, and weighted
//! reward-frequency fusion.
//!
//! Completion and scoring backends are pluggable: a deterministic simulator
//! for offline verification and an OpenAI-compatible HTTP client for real
//! models. Every sampled completion and verified step is accounted for in
//! a shared cost ledger.

pub mod aggregate;
pub mod annotate;
pub mod backend;
pub mod cli;
pub mod datagen;
pub mod evalkit;
pub mod model;
pub mod rng;
pub mod uncertainty;

pub use aggregate::{
    hmr_vote, majority_vote, prm_best_of_n, wrf_vote, AggregateError, VoteInput, DEFAULT_ALPHA,
};
pub use annotate::{
    adaptive_rollout, annotate_random, continuation_prefix, error_rank_statistics, mc_ppl,
    AnnotateError, AnnotationConfig, Annotator, FallbackPolicy, RankSummary, RolloutBatch, TauMode,
};
pub use backend::{
    BackendError, CompletionProvider, CostLedger, CostSnapshot, SamplingRequest, StepScoreVector,
    StepScorer,
};
pub use datagen::{generate_pool, select_similar, select_uncertain, DatagenError, GenerateOptions};
pub use evalkit::EvalError;
pub use model::{
    answers_match, extract_final_answer, normalize_answer, read_jsonl, read_questions,
    split_into_steps, write_jsonl, AnnotationMethod, LabeledSolution, ModelError, Question,
    SampledSolution, SolutionRecord, Step, TokenRecord,
};
pub use uncertainty::{
    log_perplexity, perplexity, sequence_entropy, softmax_probs, step_uncertainties,
    UncertaintyError, UncertaintyProfile,
};

/// Any failure the library can produce, one variant per module.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, Error>;
