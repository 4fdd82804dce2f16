//! Core data model: questions, token-level sampled solutions, step splitting,
//! answer canonicalization, and JSONL persistence.
//!
//! Everything downstream (uncertainty profiles, annotation, aggregation)
//! operates on the types defined here. The JSONL readers and writers keep the
//! on-disk field names stable so files produced by one subcommand can be fed
//! to the next.

mod answer;
mod jsonl;
mod split;
mod types;

pub use answer::{answers_match, extract_final_answer, normalize_answer};
pub use jsonl::{read_jsonl, read_questions, write_jsonl, SCHEMA_VERSION};
pub use split::{reconstruct_text, split_into_steps};
pub use types::{
    AnnotationMethod, LabeledSolution, Question, SampledSolution, SolutionRecord, Step,
    TokenRecord, LOGPROB_FLOOR,
};

/// Errors raised by model construction, parsing, and persistence.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("solution text is empty")]
    EmptySolution,
    #[error("token stream does not reconstruct the solution text (diverges at byte {at})")]
    TokenMismatch { at: usize },
    #[error("logprob {value} is not finite")]
    NonFiniteLogprob { value: f64 },
    #[error("labels length {labels} does not match step count {steps}")]
    LabelCardinality { labels: usize, steps: usize },
    #[error("labels are not monotone: a later step is labeled valid after an error at step {error_step}")]
    NonMonotoneLabels { error_step: usize },
    #[error("error step {index} is out of range 1..={steps}")]
    ErrorIndexOutOfRange { index: usize, steps: usize },
    #[error("question id '{id}' appears more than once")]
    DuplicateQuestionId { id: String },
    #[error("question '{id}' has an empty {field}")]
    EmptyQuestionField { id: String, field: &'static str },
    #[error("{path}:{line}: malformed JSONL record: {source}")]
    MalformedLine {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("failed to serialize record: {0}")]
    Serialize(#[source] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
