//! Error-step annotation for incorrect solutions.
//!
//! The signal is a perplexity-weighted Monte Carlo correctness score: roll
//! out continuations from a committed prefix and take the ratio of summed
//! log-perplexities of correct continuations to all continuations. A
//! question-level threshold tau (the same score computed from the bare
//! statement) separates "still recoverable" from "already broken": the
//! first committed step whose score drops below tau is labeled the error.
//!
//! Three strategies locate that step. Uncertainty-driven annotation probes
//! steps in descending uncertainty-delta order and usually needs one or two
//! probes; binary search probes log(T) prefixes; random guesses. Rollouts
//! use an adaptive batch schedule that stops early once enough correct
//! continuations have been seen.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, CompletionProvider, CostLedger, SamplingRequest};
use crate::model::{
    answers_match, AnnotationMethod, LabeledSolution, ModelError, Question, SampledSolution,
};
use crate::rng::{mix_seed, SimRng};
use crate::uncertainty::{log_perplexity, step_uncertainties, UncertaintyError};

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("solution has not been verified against the gold answer")]
    Unverified,
    #[error("solution is verified correct; only incorrect solutions carry an error step")]
    NotIncorrect,
    #[error("solution has no steps")]
    EmptySolution,
    #[error("rollout batch is empty")]
    EmptyBatch,
    #[error("rollout batch is incomplete after a provider failure")]
    IncompleteBatch,
    #[error("invalid annotation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Uncertainty(#[from] UncertaintyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How the correctness threshold tau is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauMode {
    /// Tau is the Monte Carlo score of the bare question statement,
    /// computed once per question and cached.
    #[default]
    PerQuestion,
    /// Tau is `fixed_tau` from the config.
    Fixed,
}

/// What to do when no probed step scores below tau.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FallbackPolicy {
    /// Drop the solution from the labeled set.
    #[default]
    Discard,
    /// Blame the step with the largest uncertainty delta.
    HighestDelta,
}

fn default_n0() -> usize {
    8
}
fn default_n_min() -> usize {
    4
}
fn default_n_max() -> usize {
    64
}
fn default_growth() -> f64 {
    2.0
}

/// Settings for adaptive rollouts and annotation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationConfig {
    /// First rollout batch size.
    #[serde(default = "default_n0")]
    pub n0: usize,
    /// Stop once this many correct continuations have been seen.
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    /// Hard cap on rollouts per probe.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Batch size multiplier between rounds.
    #[serde(default = "default_growth")]
    pub growth_factor: f64,
    #[serde(default)]
    pub tau_mode: TauMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_tau: Option<f64>,
    #[serde(default)]
    pub fallback: FallbackPolicy,
    /// Mixed into every rollout seed; vary it to resample a whole run.
    #[serde(default)]
    pub base_seed: u64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        AnnotationConfig {
            n0: default_n0(),
            n_min: default_n_min(),
            n_max: default_n_max(),
            growth_factor: default_growth(),
            tau_mode: TauMode::default(),
            fixed_tau: None,
            fallback: FallbackPolicy::default(),
            base_seed: 0,
        }
    }
}

impl AnnotationConfig {
    pub fn validate(&self) -> Result<(), AnnotateError> {
        if self.n_min == 0 || self.n_min > self.n0 || self.n0 > self.n_max {
            return Err(AnnotateError::InvalidConfig(format!(
                "need 1 <= n_min <= n0 <= n_max, got n_min={} n0={} n_max={}",
                self.n_min, self.n0, self.n_max
            )));
        }
        if self.growth_factor <= 1.0 {
            return Err(AnnotateError::InvalidConfig(format!(
                "growth factor must exceed 1, got {}",
                self.growth_factor
            )));
        }
        match (self.tau_mode, self.fixed_tau) {
            (TauMode::Fixed, None) => Err(AnnotateError::InvalidConfig(
                "fixed tau mode needs fixed_tau".into(),
            )),
            (TauMode::Fixed, Some(t)) if !(0.0..=1.0).contains(&t) => Err(
                AnnotateError::InvalidConfig(format!("fixed_tau {t} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Continuations sampled from one committed prefix.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    /// Number of committed steps the rollouts continued from (0 = bare
    /// statement).
    pub prefix_step_index: usize,
    pub trajectories: Vec<SampledSolution>,
    /// Indices into `trajectories` whose final answer matches gold.
    pub correct_indices: Vec<usize>,
    /// Set when a provider failure truncated the batch; scores from a
    /// flagged batch are not trustworthy.
    pub provider_error: bool,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn n_correct(&self) -> usize {
        self.correct_indices.len()
    }
}

/// Perplexity-weighted Monte Carlo correctness of a batch: the summed log
/// perplexity of correct trajectories over the summed log perplexity of all
/// trajectories. Lies in [0, 1]; 1 means every continuation recovered, 0
/// means none did.
///
/// When every trajectory has zero log perplexity (all tokens certain) the
/// ratio is undefined; the batch degenerates to 1 if any trajectory is
/// correct and 0 otherwise, with a warning.
pub fn mc_ppl(batch: &RolloutBatch) -> Result<f64, AnnotateError> {
    if batch.is_empty() {
        return Err(AnnotateError::EmptyBatch);
    }
    let mut denominator = 0.0;
    let mut numerator = 0.0;
    for (i, trajectory) in batch.trajectories.iter().enumerate() {
        let log_ppl = log_perplexity(&trajectory.all_logprobs())?;
        denominator += log_ppl;
        if batch.correct_indices.contains(&i) {
            numerator += log_ppl;
        }
    }
    if denominator == 0.0 {
        log::warn!(
            "all {} trajectories have zero log perplexity; falling back to a correctness indicator",
            batch.len()
        );
        return Ok(if batch.n_correct() > 0 { 1.0 } else { 0.0 });
    }
    Ok(numerator / denominator)
}

/// Samples continuations from `prefix` in growing batches (n0, then
/// n0*factor, ...) until `n_min` correct continuations have been seen or
/// `n_max` total have been sampled. With the defaults the cumulative totals
/// are 8, 24, 56, 64.
///
/// A provider failure after at least one successful round returns the
/// partial batch with `provider_error` set; a failure on the first round
/// propagates.
pub fn adaptive_rollout(
    question: &Question,
    prefix_step_index: usize,
    prefix: &str,
    config: &AnnotationConfig,
    provider: &dyn CompletionProvider,
    ledger: &CostLedger,
    seed_salt: u64,
) -> Result<RolloutBatch, AnnotateError> {
    config.validate()?;

    let mut batch = RolloutBatch {
        prefix_step_index,
        trajectories: Vec::new(),
        correct_indices: Vec::new(),
        provider_error: false,
    };
    let mut round = 0u32;
    loop {
        let planned = (config.n0 as f64 * config.growth_factor.powi(round as i32)).round() as usize;
        let take = planned.max(1).min(config.n_max - batch.len());
        if take == 0 {
            break;
        }
        let request = SamplingRequest::new(prefix, take)?
            .with_seed(mix_seed(&[config.base_seed, seed_salt, round as u64]));
        match provider.sample(&request, ledger) {
            Ok(solutions) => {
                for mut s in solutions {
                    let correct = s
                        .final_answer
                        .as_deref()
                        .map(|a| answers_match(a, &question.gold_answer))
                        .unwrap_or(false);
                    s.is_correct = Some(correct);
                    if correct {
                        batch.correct_indices.push(batch.trajectories.len());
                    }
                    batch.trajectories.push(s);
                }
            }
            Err(e) => {
                if batch.is_empty() {
                    return Err(e.into());
                }
                log::warn!(
                    "provider failed after {} rollouts from step {prefix_step_index}: {e}; \
                     returning a partial batch",
                    batch.len()
                );
                batch.provider_error = true;
                return Ok(batch);
            }
        }
        if batch.n_correct() >= config.n_min || batch.len() >= config.n_max {
            break;
        }
        round += 1;
    }
    Ok(batch)
}

/// The prompt that commits the first `committed` steps of a solution:
/// statement, blank line, then each step text separated by blank lines.
pub fn continuation_prefix(question: &Question, solution: &SampledSolution, committed: usize) -> String {
    let mut prefix = question.statement.clone();
    for step in solution.steps.iter().take(committed) {
        prefix.push_str("\n\n");
        prefix.push_str(step.text.trim());
    }
    prefix
}

/// Stateful annotation driver: owns the config and caches tau per question
/// so several solutions for the same question share one threshold estimate.
pub struct Annotator<'a> {
    config: AnnotationConfig,
    provider: &'a dyn CompletionProvider,
    ledger: &'a CostLedger,
    tau_cache: Mutex<HashMap<String, f64>>,
}

impl<'a> Annotator<'a> {
    pub fn new(
        config: AnnotationConfig,
        provider: &'a dyn CompletionProvider,
        ledger: &'a CostLedger,
    ) -> Result<Self, AnnotateError> {
        config.validate()?;
        Ok(Annotator {
            config,
            provider,
            ledger,
            tau_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &AnnotationConfig {
        &self.config
    }

    /// The correctness threshold for a question. In per-question mode this
    /// is the Monte Carlo score of the bare statement, computed on first
    /// use and cached. Threshold rollouts count as sampled completions but
    /// not as verified steps.
    pub fn tau(&self, question: &Question) -> Result<f64, AnnotateError> {
        if let TauMode::Fixed = self.config.tau_mode {
            return Ok(self.config.fixed_tau.expect("validated at construction"));
        }
        if let Some(&tau) = self.tau_cache.lock().expect("tau cache").get(&question.id) {
            return Ok(tau);
        }
        let salt = mix_seed(&[crate::rng::fnv1a(question.id.as_bytes()), 0x7A0]);
        let batch = adaptive_rollout(
            question,
            0,
            &question.statement,
            &self.config,
            self.provider,
            self.ledger,
            salt,
        )?;
        if batch.provider_error {
            return Err(AnnotateError::IncompleteBatch);
        }
        let tau = mc_ppl(&batch)?;
        self.tau_cache
            .lock()
            .expect("tau cache")
            .insert(question.id.clone(), tau);
        Ok(tau)
    }

    /// Annotates one verified solution with the given strategy: correct
    /// solutions get all-valid labels without any rollouts; incorrect ones
    /// are searched for their error step. `Ok(None)` means the discard
    /// fallback dropped the solution.
    pub fn annotate(
        &self,
        question: &Question,
        solution: &SampledSolution,
        method: AnnotationMethod,
    ) -> Result<Option<LabeledSolution>, AnnotateError> {
        if solution.is_empty() {
            return Err(AnnotateError::EmptySolution);
        }
        match solution.is_correct {
            None => Err(AnnotateError::Unverified),
            Some(true) => Ok(Some(LabeledSolution::all_true(solution.clone())?)),
            Some(false) => match method {
                AnnotationMethod::Uncertainty => self.annotate_uncertainty(question, solution),
                AnnotationMethod::BinarySearch => self.annotate_binary_search(question, solution),
                AnnotationMethod::Random => {
                    let seed = mix_seed(&[self.config.base_seed, solution.fingerprint(), 0x2A4D]);
                    annotate_random(solution, seed).map(Some)
                }
                AnnotationMethod::AllTrue => Err(AnnotateError::NotIncorrect),
            },
        }
    }

    /// Uncertainty-driven error location: probe candidate steps in
    /// descending uncertainty-delta order (the first step, which has no
    /// delta, is probed last). The first step whose committed prefix scores
    /// below tau becomes the error step.
    pub fn annotate_uncertainty(
        &self,
        question: &Question,
        solution: &SampledSolution,
    ) -> Result<Option<LabeledSolution>, AnnotateError> {
        self.require_incorrect(solution)?;
        let profile = step_uncertainties(solution)?;
        let tau = self.tau(question)?;

        let mut candidates = profile.steps_by_delta_desc();
        candidates.push(1);

        for (position, &step) in candidates.iter().enumerate() {
            let score = self.probe(question, solution, step)?;
            if score < tau {
                let mut labeled = LabeledSolution::split_at_error(
                    solution.clone(),
                    step,
                    AnnotationMethod::Uncertainty,
                )?;
                labeled.candidates_tried = Some(position + 1);
                labeled.error_delta_rank = Some(position);
                return Ok(Some(labeled));
            }
        }

        match self.config.fallback {
            FallbackPolicy::Discard => {
                log::warn!(
                    "no step of a {}-step solution for '{}' scored below tau {tau:.4}; discarding",
                    solution.len(),
                    question.id
                );
                Ok(None)
            }
            FallbackPolicy::HighestDelta => {
                let step = candidates[0];
                let mut labeled = LabeledSolution::split_at_error(
                    solution.clone(),
                    step,
                    AnnotationMethod::Uncertainty,
                )?;
                labeled.candidates_tried = Some(candidates.len());
                labeled.error_delta_rank = Some(0);
                Ok(Some(labeled))
            }
        }
    }

    /// Baseline: binary search for the smallest step index whose committed
    /// prefix scores below tau. Needs the score to cross tau once, which
    /// holds when correctness only degrades along the solution.
    pub fn annotate_binary_search(
        &self,
        question: &Question,
        solution: &SampledSolution,
    ) -> Result<Option<LabeledSolution>, AnnotateError> {
        self.require_incorrect(solution)?;
        let tau = self.tau(question)?;

        let mut lo = 1usize;
        let mut hi = solution.len();
        let mut found = None;
        let mut probes = 0usize;
        while lo <= hi {
            let mid = (lo + hi) / 2;
            probes += 1;
            let score = self.probe(question, solution, mid)?;
            if score < tau {
                found = Some(mid);
                if mid == 1 {
                    break;
                }
                hi = mid - 1;
            } else {
                lo = mid + 1;
            }
        }

        match found {
            Some(step) => {
                let mut labeled = LabeledSolution::split_at_error(
                    solution.clone(),
                    step,
                    AnnotationMethod::BinarySearch,
                )?;
                labeled.candidates_tried = Some(probes);
                Ok(Some(labeled))
            }
            None => match self.config.fallback {
                FallbackPolicy::Discard => {
                    log::warn!(
                        "binary search found no step below tau {tau:.4} for '{}'; discarding",
                        question.id
                    );
                    Ok(None)
                }
                FallbackPolicy::HighestDelta => {
                    let profile = step_uncertainties(solution)?;
                    let step = profile.steps_by_delta_desc().first().copied().unwrap_or(1);
                    let mut labeled = LabeledSolution::split_at_error(
                        solution.clone(),
                        step,
                        AnnotationMethod::BinarySearch,
                    )?;
                    labeled.candidates_tried = Some(probes);
                    Ok(Some(labeled))
                }
            },
        }
    }

    /// One verification probe: commit steps 1..=step and score the batch.
    /// Every probe counts one verified step in the ledger.
    fn probe(
        &self,
        question: &Question,
        solution: &SampledSolution,
        step: usize,
    ) -> Result<f64, AnnotateError> {
        self.ledger.add_verified_steps(1);
        let prefix = continuation_prefix(question, solution, step);
        let salt = mix_seed(&[solution.fingerprint(), step as u64]);
        let batch = adaptive_rollout(
            question,
            step,
            &prefix,
            &self.config,
            self.provider,
            self.ledger,
            salt,
        )?;
        if batch.provider_error {
            return Err(AnnotateError::IncompleteBatch);
        }
        mc_ppl(&batch)
    }

    fn require_incorrect(&self, solution: &SampledSolution) -> Result<(), AnnotateError> {
        if solution.is_empty() {
            return Err(AnnotateError::EmptySolution);
        }
        match solution.is_correct {
            Some(false) => Ok(()),
            Some(true) => Err(AnnotateError::NotIncorrect),
            None => Err(AnnotateError::Unverified),
        }
    }
}

/// Baseline: the error step is drawn uniformly from 1..=T. Deterministic in
/// the seed; no rollouts, no ledger cost.
pub fn annotate_random(solution: &SampledSolution, seed: u64) -> Result<LabeledSolution, AnnotateError> {
    if solution.is_empty() {
        return Err(AnnotateError::EmptySolution);
    }
    match solution.is_correct {
        Some(false) => {}
        Some(true) => return Err(AnnotateError::NotIncorrect),
        None => return Err(AnnotateError::Unverified),
    }
    let mut rng = SimRng::new(mix_seed(&[seed, 0x52AD]));
    let step = 1 + rng.gen_range(solution.len() as u64) as usize;
    let mut labeled =
        LabeledSolution::split_at_error(solution.clone(), step, AnnotationMethod::Random)?;
    labeled.candidates_tried = Some(1);
    Ok(labeled)
}

/// Averages of annotation effort over solutions that carry an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub solutions: usize,
    /// Solutions with an error index (incorrect ones).
    pub with_error: usize,
    /// Mean probes per erroneous solution.
    pub mean_candidates_tried: f64,
    /// Mean 0-based rank of the chosen error step in the uncertainty-delta
    /// ordering (probes - 1 when the search stopped at first hit).
    pub mean_error_rank: f64,
}

/// Aggregates probe counts and uncertainty ranks over labeled solutions.
/// Solutions lacking stored metadata get their rank recomputed from the
/// uncertainty profile when possible.
pub fn error_rank_statistics(labeled: &[LabeledSolution]) -> RankSummary {
    let mut with_error = 0usize;
    let mut tried_sum = 0.0;
    let mut tried_n = 0usize;
    let mut rank_sum = 0.0;
    let mut rank_n = 0usize;

    for l in labeled {
        let Some(error_index) = l.error_index else { continue };
        with_error += 1;
        if let Some(tried) = l.candidates_tried {
            tried_sum += tried as f64;
            tried_n += 1;
        }
        let rank = l.error_delta_rank.or_else(|| {
            let profile = step_uncertainties(&l.solution).ok()?;
            let mut candidates = profile.steps_by_delta_desc();
            candidates.push(1);
            candidates.iter().position(|&s| s == error_index)
        });
        if let Some(rank) = rank {
            rank_sum += rank as f64;
            rank_n += 1;
        }
    }

    RankSummary {
        solutions: labeled.len(),
        with_error,
        mean_candidates_tried: if tried_n > 0 { tried_sum / tried_n as f64 } else { 0.0 },
        mean_error_rank: if rank_n > 0 { rank_sum / rank_n as f64 } else { 0.0 },
    }
}
