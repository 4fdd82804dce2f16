//! Answer aggregation over multi-sample candidate sets.
//!
//! Four rules pick a final answer from N sampled solutions:
//!
//! * majority: most frequent canonical answer;
//! * best-of-n: answer of the candidate with the highest reward, where a
//!   candidate's reward is the minimum of its step scores;
//! * hybrid: majority when the top answer holds at least half the votes
//!   (no scoring cost at all), best-of-n otherwise;
//! * weighted fusion: per-answer blend of min-max normalized mean reward
//!   and normalized frequency, `alpha * reward + (1 - alpha) * frequency`.
//!
//! Candidates without an extractable final answer never vote. All rules
//! break ties toward the earliest candidate or answer group, so outcomes
//! are deterministic in input order.

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, StepScoreVector, StepScorer};
use crate::model::{normalize_answer, Question, SampledSolution, SolutionRecord};

/// Default blend between reward and frequency in weighted fusion.
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum AggregateError {
    #[error("no candidate carries an extractable final answer")]
    NoValidCandidates,
    #[error("alpha {0} is outside [0, 1]")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One voting candidate: a sampled solution plus optional step labels that
/// a label-replaying scorer can use as its reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoteInput {
    pub solution: SampledSolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
}

impl VoteInput {
    pub fn bare(solution: SampledSolution) -> Self {
        VoteInput {
            solution,
            labels: None,
        }
    }

    pub fn with_labels(solution: SampledSolution, labels: Vec<bool>) -> Self {
        VoteInput {
            solution,
            labels: Some(labels),
        }
    }

    pub fn from_record(record: SolutionRecord) -> Self {
        VoteInput {
            solution: record.solution,
            labels: record.labels,
        }
    }
}

/// A candidate's reward is its weakest step.
pub fn solution_reward(scores: &StepScoreVector) -> f64 {
    scores.min_score()
}

/// Valid voters: original index plus canonical answer, in input order.
fn valid_candidates(candidates: &[VoteInput]) -> Vec<(usize, String)> {
    candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let raw = c.solution.final_answer.as_deref()?;
            let canonical = normalize_answer(raw);
            if canonical.is_empty() {
                None
            } else {
                Some((i, canonical))
            }
        })
        .collect()
}

/// Answers grouped by canonical form, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerGroup {
    pub answer: String,
    pub frequency: usize,
    pub rewards: Vec<f64>,
}

impl AnswerGroup {
    pub fn mean_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }
}

/// Groups (answer, reward) pairs by answer, preserving first-occurrence
/// order. The answer strings are compared as given; canonicalize first.
pub fn group_pairs(pairs: &[(String, f64)]) -> Vec<AnswerGroup> {
    let mut groups: Vec<AnswerGroup> = Vec::new();
    for (answer, reward) in pairs {
        match groups.iter_mut().find(|g| g.answer == *answer) {
            Some(g) => {
                g.frequency += 1;
                g.rewards.push(*reward);
            }
            None => groups.push(AnswerGroup {
                answer: answer.clone(),
                frequency: 1,
                rewards: vec![*reward],
            }),
        }
    }
    groups
}

/// The group with the strictly highest frequency; ties keep the earliest
/// group. None only for an empty slice.
pub fn top_group(groups: &[AnswerGroup]) -> Option<&AnswerGroup> {
    groups.iter().reduce(|best, g| {
        if g.frequency > best.frequency {
            g
        } else {
            best
        }
    })
}

/// Min-max normalizes `values`; a degenerate range maps everything to 1.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() || max == min {
        return vec![1.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Weighted fusion scores aligned with `groups`:
/// `alpha * normalized mean reward + (1 - alpha) * normalized frequency`.
pub fn fusion_scores(groups: &[AnswerGroup], alpha: f64) -> Result<Vec<f64>, AggregateError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AggregateError::InvalidAlpha(alpha));
    }
    let rewards: Vec<f64> = groups.iter().map(|g| g.mean_reward()).collect();
    let frequencies: Vec<f64> = groups.iter().map(|g| g.frequency as f64).collect();
    let norm_rewards = min_max_normalize(&rewards);
    let norm_frequencies = min_max_normalize(&frequencies);
    Ok(norm_rewards
        .iter()
        .zip(&norm_frequencies)
        .map(|(m, f)| alpha * m + (1.0 - alpha) * f)
        .collect())
}

/// Index of the strictly largest score; ties keep the earliest.
fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if scores[b] >= s => {}
            _ => best = Some(i),
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorityOutcome {
    pub answer: String,
    /// Votes for the winning answer.
    pub frequency: usize,
    /// Total valid voters (candidates with an extractable answer).
    pub total: usize,
}

/// Most frequent canonical answer; frequency ties keep the answer that
/// appeared first.
pub fn majority_vote(candidates: &[VoteInput]) -> Result<MajorityOutcome, AggregateError> {
    let valid = valid_candidates(candidates);
    let pairs: Vec<(String, f64)> = valid.into_iter().map(|(_, a)| (a, 0.0)).collect();
    let groups = group_pairs(&pairs);
    let top = top_group(&groups).ok_or(AggregateError::NoValidCandidates)?;
    Ok(MajorityOutcome {
        answer: top.answer.clone(),
        frequency: top.frequency,
        total: pairs.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestOfNOutcome {
    pub answer: String,
    /// Reward of the winning candidate.
    pub reward: f64,
    /// Index of the winner in the original candidate slice.
    pub candidate_index: usize,
}

/// Scores every valid candidate and returns the answer of the one with the
/// highest reward (minimum step score). Reward ties keep the earliest
/// candidate.
pub fn prm_best_of_n(
    question: &Question,
    candidates: &[VoteInput],
    scorer: &dyn StepScorer,
) -> Result<BestOfNOutcome, AggregateError> {
    let valid = valid_candidates(candidates);
    if valid.is_empty() {
        return Err(AggregateError::NoValidCandidates);
    }
    let mut rewards = Vec::with_capacity(valid.len());
    for (i, _) in &valid {
        let c = &candidates[*i];
        let scores = scorer.score(question, &c.solution, c.labels.as_deref())?;
        rewards.push(solution_reward(&scores));
    }
    let best = argmax(&rewards).expect("non-empty rewards");
    let (candidate_index, answer) = valid[best].clone();
    Ok(BestOfNOutcome {
        answer,
        reward: rewards[best],
        candidate_index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HybridOutcome {
    pub answer: String,
    /// True when the majority shortcut decided without any scoring.
    pub used_majority: bool,
    pub majority_frequency: usize,
    pub total: usize,
}

/// Hybrid rule: when the most frequent answer holds at least half of the
/// valid votes, return it without calling the scorer at all; otherwise fall
/// back to best-of-n.
pub fn hmr_vote(
    question: &Question,
    candidates: &[VoteInput],
    scorer: &dyn StepScorer,
) -> Result<HybridOutcome, AggregateError> {
    let majority = majority_vote(candidates)?;
    if majority.frequency as f64 >= majority.total as f64 / 2.0 {
        return Ok(HybridOutcome {
            answer: majority.answer,
            used_majority: true,
            majority_frequency: majority.frequency,
            total: majority.total,
        });
    }
    let best = prm_best_of_n(question, candidates, scorer)?;
    Ok(HybridOutcome {
        answer: best.answer,
        used_majority: false,
        majority_frequency: majority.frequency,
        total: majority.total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionGroup {
    pub answer: String,
    pub frequency: usize,
    pub mean_reward: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusionOutcome {
    pub answer: String,
    pub groups: Vec<FusionGroup>,
}

/// Weighted fusion: scores every valid candidate, groups by canonical
/// answer, and picks the group maximizing the blended score. Score ties
/// keep the earliest group, i.e. the answer seen first.
pub fn wrf_vote(
    question: &Question,
    candidates: &[VoteInput],
    scorer: &dyn StepScorer,
    alpha: f64,
) -> Result<FusionOutcome, AggregateError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AggregateError::InvalidAlpha(alpha));
    }
    let valid = valid_candidates(candidates);
    if valid.is_empty() {
        return Err(AggregateError::NoValidCandidates);
    }
    let mut pairs = Vec::with_capacity(valid.len());
    for (i, canonical) in valid {
        let c = &candidates[i];
        let scores = scorer.score(question, &c.solution, c.labels.as_deref())?;
        pairs.push((canonical, solution_reward(&scores)));
    }
    let groups = group_pairs(&pairs);
    let scores = fusion_scores(&groups, alpha)?;
    let best = argmax(&scores).expect("non-empty groups");
    Ok(FusionOutcome {
        answer: groups[best].answer.clone(),
        groups: groups
            .iter()
            .zip(&scores)
            .map(|(g, &score)| FusionGroup {
                answer: g.answer.clone(),
                frequency: g.frequency,
                mean_reward: g.mean_reward(),
                score,
            })
            .collect(),
    })
}

/// Hybrid rule over precomputed (answer, reward) pairs: majority when the
/// top answer holds at least half the votes, otherwise the answer of the
/// highest-reward pair. Same decision rule as [`hmr_vote`], for callers
/// that already hold rewards.
pub fn pairs_hmr(pairs: &[(String, f64)]) -> Option<String> {
    let groups = group_pairs(pairs);
    let top = top_group(&groups)?;
    if top.frequency as f64 >= pairs.len() as f64 / 2.0 {
        return Some(top.answer.clone());
    }
    let rewards: Vec<f64> = pairs.iter().map(|(_, r)| *r).collect();
    argmax(&rewards).map(|i| pairs[i].0.clone())
}

/// Weighted fusion over precomputed (answer, reward) pairs.
pub fn pairs_wrf(pairs: &[(String, f64)], alpha: f64) -> Result<Option<String>, AggregateError> {
    let groups = group_pairs(pairs);
    if groups.is_empty() {
        return Ok(None);
    }
    let scores = fusion_scores(&groups, alpha)?;
    Ok(argmax(&scores).map(|i| groups[i].answer.clone()))
}
