//! Best-of-n accuracy sweeps: evaluate aggregation strategies at several
//! candidate-set sizes over per-question sample pools.
//!
//! Subsets are nested prefixes: each question's pool is shuffled once with
//! a seed derived from the sweep seed and the question id, and the subset
//! of size n is the first n shuffled candidates. Larger sizes therefore
//! extend smaller ones, so accuracy differences across sizes reflect the
//! added samples rather than resampling noise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::aggregate::{
    hmr_vote, majority_vote, prm_best_of_n, wrf_vote, AggregateError, VoteInput, DEFAULT_ALPHA,
};
use crate::backend::StepScorer;
use crate::model::{answers_match, Question};
use crate::rng::{fnv1a, mix_seed, SimRng};

use super::EvalError;

pub const SUBSET_PROTOCOL: &str = "nested-prefix";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Majority,
    PrmBon,
    Hmr,
    Wrf,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Majority,
        Strategy::PrmBon,
        Strategy::Hmr,
        Strategy::Wrf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Majority => "majority",
            Strategy::PrmBon => "prm_bon",
            Strategy::Hmr => "hmr",
            Strategy::Wrf => "wrf",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Candidate-set sizes, strictly increasing.
    pub sizes: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub seed: u64,
    /// Reward weight for the weighted-fusion strategy.
    pub alpha: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sizes: vec![1, 2, 4, 8, 16, 32, 64],
            strategies: Strategy::ALL.to_vec(),
            seed: 0,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// One (question, size, strategy) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub question_id: String,
    pub size: usize,
    pub strategy: Strategy,
    /// Chosen canonical answer; None when no candidate in the subset had
    /// an extractable answer (counted as incorrect).
    pub answer: Option<String>,
    pub correct: bool,
}

/// Accuracy of one strategy at one size, over all questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub size: usize,
    pub strategy: Strategy,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub subset_protocol: String,
    pub points: Vec<SweepPoint>,
    pub decisions: Vec<DecisionRecord>,
}

impl SweepResult {
    /// The accuracy point for (size, strategy), if swept.
    pub fn point(&self, size: usize, strategy: Strategy) -> Option<&SweepPoint> {
        self.points
            .iter()
            .find(|p| p.size == size && p.strategy == strategy)
    }
}

/// The shuffled candidate order a sweep uses for one question. Exposed so
/// other analyses (and tests) can reproduce the exact subsets.
pub fn subset_order(seed: u64, question_id: &str, pool_len: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool_len).collect();
    let mut rng = SimRng::new(mix_seed(&[seed, fnv1a(question_id.as_bytes())]));
    rng.shuffle(&mut order);
    order
}

/// Runs every (size, strategy) cell over per-question pools. Every question
/// needs a pool at least as large as the biggest size. Subsets with no
/// extractable answer count as incorrect instead of failing the sweep;
/// scorer failures propagate.
pub fn bon_sweep(
    questions: &[Question],
    pools: &BTreeMap<String, Vec<VoteInput>>,
    scorer: &dyn StepScorer,
    config: &SweepConfig,
) -> Result<SweepResult, EvalError> {
    if config.sizes.is_empty() || config.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadSizes);
    }
    if config.sizes[0] == 0 {
        return Err(EvalError::BadSizes);
    }
    if config.strategies.is_empty() {
        return Err(EvalError::NoStrategies);
    }
    let needed = *config.sizes.last().expect("non-empty sizes");

    let mut decisions = Vec::new();
    let mut tally: BTreeMap<(usize, Strategy), (usize, usize)> = BTreeMap::new();

    for question in questions {
        let pool = pools
            .get(&question.id)
            .ok_or_else(|| EvalError::MissingPool(question.id.clone()))?;
        if pool.len() < needed {
            return Err(EvalError::PoolTooSmall {
                question_id: question.id.clone(),
                pool: pool.len(),
                needed,
            });
        }
        let order = subset_order(config.seed, &question.id, pool.len());

        for &size in &config.sizes {
            let subset: Vec<VoteInput> =
                order[..size].iter().map(|&i| pool[i].clone()).collect();
            for &strategy in &config.strategies {
                let answer = run_strategy(question, &subset, scorer, strategy, config.alpha)?;
                let correct = answer
                    .as_deref()
                    .map(|a| answers_match(a, &question.gold_answer))
                    .unwrap_or(false);
                let entry = tally.entry((size, strategy)).or_insert((0, 0));
                entry.0 += correct as usize;
                entry.1 += 1;
                decisions.push(DecisionRecord {
                    question_id: question.id.clone(),
                    size,
                    strategy,
                    answer,
                    correct,
                });
            }
        }
    }

    let mut points = Vec::new();
    for &size in &config.sizes {
        for &strategy in &config.strategies {
            let (correct, total) = tally.get(&(size, strategy)).copied().unwrap_or((0, 0));
            points.push(SweepPoint {
                size,
                strategy,
                correct,
                total,
                accuracy: if total > 0 {
                    correct as f64 / total as f64
                } else {
                    0.0
                },
            });
        }
    }

    Ok(SweepResult {
        seed: config.seed,
        subset_protocol: SUBSET_PROTOCOL.to_string(),
        points,
        decisions,
    })
}

/// Runs one strategy over a candidate set; `None` when no candidate had an
/// extractable answer.
pub(crate) fn run_strategy(
    question: &Question,
    subset: &[VoteInput],
    scorer: &dyn StepScorer,
    strategy: Strategy,
    alpha: f64,
) -> Result<Option<String>, EvalError> {
    let outcome = match strategy {
        Strategy::Majority => majority_vote(subset).map(|o| o.answer),
        Strategy::PrmBon => prm_best_of_n(question, subset, scorer).map(|o| o.answer),
        Strategy::Hmr => hmr_vote(question, subset, scorer).map(|o| o.answer),
        Strategy::Wrf => wrf_vote(question, subset, scorer, alpha).map(|o| o.answer),
    };
    match outcome {
        Ok(answer) => Ok(Some(answer)),
        Err(AggregateError::NoValidCandidates) => Ok(None),
        Err(e) => Err(e.into()),
    }
}
