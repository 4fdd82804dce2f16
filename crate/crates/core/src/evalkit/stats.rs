//! Dataset statistics over labeled solutions, grouped by generator tag.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::annotate::error_rank_statistics;
use crate::model::LabeledSolution;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagStats {
    pub solutions: usize,
    /// Solutions with every step valid (no error index).
    pub correct: usize,
    /// Solutions carrying an error index.
    pub with_error: usize,
    pub mean_steps: f64,
    /// Mean verification probes per erroneous solution.
    pub mean_candidates_tried: f64,
    /// Mean 0-based uncertainty rank of the chosen error step.
    pub mean_error_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    /// Per-generator-tag statistics in tag order.
    pub by_tag: BTreeMap<String, TagStats>,
}

/// Groups labeled solutions by generator tag and reports per-tag effort and
/// shape statistics. Deterministic: tags are emitted in sorted order.
pub fn dataset_stats(labeled: &[LabeledSolution]) -> DatasetStats {
    let mut groups: BTreeMap<String, Vec<&LabeledSolution>> = BTreeMap::new();
    for l in labeled {
        groups
            .entry(l.solution.generator_tag.clone())
            .or_default()
            .push(l);
    }

    let mut by_tag = BTreeMap::new();
    for (tag, group) in groups {
        let owned: Vec<LabeledSolution> = group.iter().map(|&l| l.clone()).collect();
        let summary = error_rank_statistics(&owned);
        let steps_sum: usize = group.iter().map(|l| l.solution.len()).sum();
        by_tag.insert(
            tag,
            TagStats {
                solutions: group.len(),
                correct: group.len() - summary.with_error,
                with_error: summary.with_error,
                mean_steps: if group.is_empty() {
                    0.0
                } else {
                    steps_sum as f64 / group.len() as f64
                },
                mean_candidates_tried: summary.mean_candidates_tried,
                mean_error_rank: summary.mean_error_rank,
            },
        );
    }

    DatasetStats {
        total: labeled.len(),
        by_tag,
    }
}
