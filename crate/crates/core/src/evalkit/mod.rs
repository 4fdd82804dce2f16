//! Evaluation and reporting: accuracy sweeps over candidate-set sizes,
//! error-location F1, dataset statistics, gold-answer frequency analysis,
//! and training-data export.

use std::path::PathBuf;

use crate::aggregate::AggregateError;
use crate::model::ModelError;

mod export;
mod f1;
mod freq;
mod stats;
mod sweep;

pub use export::{
    count_unescaped_tags, escape_step_text, export_training_data, export_training_record,
    parse_training_record, unescape_step_text, ParsedRecord, TrainingRecord, STEP_TAG,
};
pub use f1::{processbench_f1, F1Report};
pub use freq::{
    bucket_for, frequency_analysis, gold_frequency, write_bucket_csv, write_histogram_csv,
    BucketCell, BucketRow, FrequencyReport, HistogramEntry, BUCKET_LABELS,
};
pub use stats::{dataset_stats, DatasetStats, TagStats};
pub use sweep::{
    bon_sweep, subset_order, DecisionRecord, Strategy, SweepConfig, SweepPoint, SweepResult,
    SUBSET_PROTOCOL,
};
pub(crate) use sweep::run_strategy;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("predictions ({predictions}) and references ({references}) differ in length")]
    LengthMismatch {
        predictions: usize,
        references: usize,
    },
    #[error("sweep sizes must be non-empty and strictly increasing")]
    BadSizes,
    #[error("no aggregation strategies requested")]
    NoStrategies,
    #[error("question '{question_id}' has {pool} pooled candidates but the sweep needs {needed}")]
    PoolTooSmall {
        question_id: String,
        pool: usize,
        needed: usize,
    },
    #[error("no candidate pool for question '{0}'")]
    MissingPool(String),
    #[error("no question with id '{0}'")]
    UnknownQuestion(String),
    #[error("malformed training record: {0}")]
    MalformedRecord(String),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
