//! Gold-answer frequency analysis: bucket questions by how often the gold
//! answer appears in their sample pool, then break strategy accuracy down
//! per bucket. The interesting regime is the middle buckets, where the
//! gold answer is present but not dominant.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::aggregate::VoteInput;
use crate::model::{normalize_answer, Question};

use super::sweep::DecisionRecord;
use super::EvalError;

pub const BUCKET_LABELS: [&str; 5] = ["0", "1-19", "20-40", "41-63", "64+"];

/// The bucket label for a gold-answer frequency.
pub fn bucket_for(frequency: usize) -> &'static str {
    match frequency {
        0 => "0",
        1..=19 => "1-19",
        20..=40 => "20-40",
        41..=63 => "41-63",
        _ => "64+",
    }
}

/// How many pooled candidates answer with the gold answer (canonical
/// comparison; answerless candidates never match).
pub fn gold_frequency(question: &Question, pool: &[VoteInput]) -> usize {
    let gold = normalize_answer(&question.gold_answer);
    pool.iter()
        .filter(|c| {
            c.solution
                .final_answer
                .as_deref()
                .map(|a| normalize_answer(a) == gold)
                .unwrap_or(false)
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramEntry {
    pub question_id: String,
    pub gold_frequency: usize,
    pub bucket: &'static str,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct BucketCell {
    pub correct: usize,
    pub total: usize,
}

impl BucketCell {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub bucket: &'static str,
    /// Questions whose gold frequency falls in this bucket.
    pub questions: usize,
    /// Per-strategy decision tallies, keyed by strategy name.
    pub cells: BTreeMap<String, BucketCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyReport {
    pub histogram: Vec<HistogramEntry>,
    /// One row per bucket label, including empty buckets.
    pub rows: Vec<BucketRow>,
}

impl FrequencyReport {
    pub fn row(&self, bucket: &str) -> Option<&BucketRow> {
        self.rows.iter().find(|r| r.bucket == bucket)
    }
}

/// Buckets questions by gold frequency in their pool and tallies the given
/// decisions per (bucket, strategy). Decisions must reference known
/// questions; pass decisions from a single sweep size so each (question,
/// strategy) appears once.
pub fn frequency_analysis(
    questions: &[Question],
    pools: &BTreeMap<String, Vec<VoteInput>>,
    decisions: &[DecisionRecord],
) -> Result<FrequencyReport, EvalError> {
    let mut histogram = Vec::with_capacity(questions.len());
    let mut bucket_of: BTreeMap<&str, &'static str> = BTreeMap::new();
    for question in questions {
        let pool = pools
            .get(&question.id)
            .ok_or_else(|| EvalError::MissingPool(question.id.clone()))?;
        let frequency = gold_frequency(question, pool);
        let bucket = bucket_for(frequency);
        bucket_of.insert(question.id.as_str(), bucket);
        histogram.push(HistogramEntry {
            question_id: question.id.clone(),
            gold_frequency: frequency,
            bucket,
        });
    }

    let mut rows: Vec<BucketRow> = BUCKET_LABELS
        .iter()
        .map(|&bucket| BucketRow {
            bucket,
            questions: histogram.iter().filter(|h| h.bucket == bucket).count(),
            cells: BTreeMap::new(),
        })
        .collect();

    for decision in decisions {
        let bucket = *bucket_of
            .get(decision.question_id.as_str())
            .ok_or_else(|| EvalError::UnknownQuestion(decision.question_id.clone()))?;
        let row = rows
            .iter_mut()
            .find(|r| r.bucket == bucket)
            .expect("all labels present");
        let cell = row
            .cells
            .entry(decision.strategy.as_str().to_string())
            .or_default();
        cell.total += 1;
        cell.correct += decision.correct as usize;
    }

    Ok(FrequencyReport { histogram, rows })
}

fn csv_field(value: &str) -> String {
    if value.contains(',') || value.contains('"') || value.contains('\n') {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), EvalError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes per-bucket strategy accuracy in long form:
/// `bucket,questions,strategy,correct,total,accuracy`.
pub fn write_bucket_csv(path: &Path, report: &FrequencyReport) -> Result<(), EvalError> {
    let mut out = String::from("bucket,questions,strategy,correct,total,accuracy\n");
    for row in &report.rows {
        for (strategy, cell) in &row.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                csv_field(row.bucket),
                row.questions,
                csv_field(strategy),
                cell.correct,
                cell.total,
                cell.accuracy()
            ));
        }
    }
    write_file(path, &out)
}

/// Writes the per-question histogram: `question_id,gold_frequency,bucket`.
pub fn write_histogram_csv(path: &Path, report: &FrequencyReport) -> Result<(), EvalError> {
    let mut out = String::from("question_id,gold_frequency,bucket\n");
    for entry in &report.histogram {
        out.push_str(&format!(
            "{},{},{}\n",
            csv_field(&entry.question_id),
            entry.gold_frequency,
            csv_field(entry.bucket)
        ));
    }
    write_file(path, &out)
}
