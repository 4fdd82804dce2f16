//! Deterministic completion simulator.
//!
//! A [`SimulatedWorld`] fixes, per question, the answer distribution for
//! fresh samples, a recovery probability for continuations at each depth,
//! and token-count profiles that shape per-step entropy (a step with n
//! roughly uniform tokens has entropy near ln n, so planting a large token
//! count plants an uncertainty spike). Incorrect fresh samples carry their
//! planted error step; continuation samples follow the recovery curve of
//! the depth they start from.
//!
//! Everything is a pure function of (world, request): the same request
//! against the same world yields byte-identical solutions, which is what
//! makes the end-to-end pipeline reproducible without a network.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    completion_to_solution, BackendError, CompletionProvider, CostLedger, RawCompletion,
    SamplingRequest,
};
use crate::model::{answers_match, Question, SampledSolution, TokenRecord};
use crate::rng::{fnv1a, mix_seed, SimRng};

/// Shape of one generated step: how many filler tokens it emits and how much
/// the token logprobs wobble (logprob = -1 - spread * uniform).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProfile {
    pub tokens: usize,
    pub spread: f64,
}

impl StepProfile {
    pub fn new(tokens: usize, spread: f64) -> Self {
        StepProfile { tokens, spread }
    }
}

/// Occasional pre-error entropy spike on incorrect samples: with probability
/// `prob`, one step strictly before the planted error is generated with
/// `profile` instead of its base profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousSpike {
    pub prob: f64,
    pub profile: StepProfile,
}

/// Ground truth for one simulated question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionWorld {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
    /// Final-answer distribution for fresh (depth-0) samples, as
    /// (answer, probability) pairs summing to 1.
    pub answer_dist: Vec<(String, f64)>,
    pub num_steps: usize,
    /// Step at which incorrect fresh samples go wrong; their entropy spikes
    /// here. Required whenever the distribution can produce a wrong answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_error_step: Option<usize>,
    /// Base profile per step, length `num_steps`.
    pub step_profiles: Vec<StepProfile>,
    /// Profile of the planted error step; defaults to the base profile with
    /// triple the tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_profile: Option<StepProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spurious: Option<SpuriousSpike>,
    /// recovery[d] is the probability that a continuation started after d
    /// committed steps reaches the gold answer; length `num_steps + 1`.
    pub recovery: Vec<f64>,
}

impl QuestionWorld {
    /// A world with uniform base profiles, handy for tests and examples.
    pub fn uniform(
        id: impl Into<String>,
        statement: impl Into<String>,
        gold_answer: impl Into<String>,
        answer_dist: Vec<(String, f64)>,
        num_steps: usize,
        recovery: Vec<f64>,
    ) -> Self {
        QuestionWorld {
            id: id.into(),
            statement: statement.into(),
            gold_answer: gold_answer.into(),
            answer_dist,
            num_steps,
            planted_error_step: None,
            step_profiles: vec![StepProfile::new(4, 0.05); num_steps],
            error_profile: None,
            spurious: None,
            recovery,
        }
    }

    pub fn question(&self) -> Question {
        Question {
            id: self.id.clone(),
            statement: self.statement.clone(),
            gold_answer: self.gold_answer.clone(),
        }
    }

    fn effective_error_profile(&self, step: usize) -> StepProfile {
        self.error_profile.clone().unwrap_or_else(|| {
            let base = &self.step_profiles[step - 1];
            StepProfile::new(base.tokens * 3, base.spread)
        })
    }

    fn validate(&self) -> Result<(), BackendError> {
        let fail = |msg: String| Err(BackendError::InvalidWorld(msg));
        if self.id.trim().is_empty() || self.statement.trim().is_empty() {
            return fail(format!("question '{}' has a blank id or statement", self.id));
        }
        if self.gold_answer.trim().is_empty() {
            return fail(format!("question '{}' has a blank gold answer", self.id));
        }
        if self.num_steps == 0 {
            return fail(format!("question '{}' has zero steps", self.id));
        }
        if self.answer_dist.is_empty() {
            return fail(format!("question '{}' has an empty answer distribution", self.id));
        }
        let mut sum = 0.0;
        for (answer, p) in &self.answer_dist {
            if answer.trim().is_empty() || answer.contains('{') || answer.contains('}') {
                return fail(format!(
                    "question '{}': answer {answer:?} is blank or contains braces",
                    self.id
                ));
            }
            if !(0.0..=1.0).contains(p) {
                return fail(format!("question '{}': probability {p} out of range", self.id));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!(
                "question '{}': answer distribution sums to {sum}, not 1",
                self.id
            ));
        }
        if self.step_profiles.len() != self.num_steps {
            return fail(format!(
                "question '{}': {} step profiles for {} steps",
                self.id,
                self.step_profiles.len(),
                self.num_steps
            ));
        }
        if self.step_profiles.iter().any(|p| p.tokens == 0) {
            return fail(format!("question '{}': a step profile emits zero tokens", self.id));
        }
        if self.recovery.len() != self.num_steps + 1 {
            return fail(format!(
                "question '{}': recovery has length {}, want num_steps + 1 = {}",
                self.id,
                self.recovery.len(),
                self.num_steps + 1
            ));
        }
        if self.recovery.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return fail(format!("question '{}': recovery probability out of range", self.id));
        }
        if let Some(e) = self.planted_error_step {
            if e == 0 || e > self.num_steps {
                return fail(format!(
                    "question '{}': planted error step {e} outside 1..={}",
                    self.id, self.num_steps
                ));
            }
            let pre_min = self.recovery[..e]
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            let post_max = self.recovery[e..]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if pre_min < post_max {
                return fail(format!(
                    "question '{}': recovery must not rise after the planted error \
                     (min before {pre_min} < max after {post_max})",
                    self.id
                ));
            }
        }
        if let Some(s) = &self.spurious {
            if !(0.0..=1.0).contains(&s.prob) {
                return fail(format!("question '{}': spurious probability out of range", self.id));
            }
        }
        Ok(())
    }
}

/// A full simulated dataset plus the seed mixed into every draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWorld {
    pub base_seed: u64,
    pub questions: Vec<QuestionWorld>,
}

impl SimulatedWorld {
    pub fn new(base_seed: u64, questions: Vec<QuestionWorld>) -> Result<Self, BackendError> {
        let world = SimulatedWorld {
            base_seed,
            questions,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidWorld(format!("{}: {e}", path.display())))?;
        let world: SimulatedWorld = serde_json::from_str(&raw)
            .map_err(|e| BackendError::InvalidWorld(format!("{}: {e}", path.display())))?;
        world.validate()?;
        Ok(world)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| BackendError::InvalidWorld(e.to_string()))?;
        std::fs::write(path, json)
            .map_err(|e| BackendError::InvalidWorld(format!("{}: {e}", path.display())))
    }

    /// The questions this world can answer, as pipeline inputs.
    pub fn questions(&self) -> Vec<Question> {
        self.questions.iter().map(|q| q.question()).collect()
    }

    fn validate(&self) -> Result<(), BackendError> {
        if self.questions.is_empty() {
            return Err(BackendError::InvalidWorld("world has no questions".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for q in &self.questions {
            q.validate()?;
            if !ids.insert(q.id.as_str()) {
                return Err(BackendError::InvalidWorld(format!(
                    "duplicate question id '{}'",
                    q.id
                )));
            }
        }
        for a in &self.questions {
            for b in &self.questions {
                if a.id != b.id && b.statement.starts_with(&a.statement) {
                    return Err(BackendError::InvalidWorld(format!(
                        "statement of '{}' is a prefix of statement of '{}'; \
                         prefixes would be ambiguous",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic [`CompletionProvider`] backed by a [`SimulatedWorld`].
pub struct SimProvider {
    world: SimulatedWorld,
    tag: String,
    completions_served: AtomicU64,
    tokens_served: AtomicU64,
}

impl SimProvider {
    pub fn new(world: SimulatedWorld) -> Self {
        SimProvider {
            world,
            tag: "sim".to_string(),
            completions_served: AtomicU64::new(0),
            tokens_served: AtomicU64::new(0),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn world(&self) -> &SimulatedWorld {
        &self.world
    }

    /// Completions actually produced, for reconciliation against a ledger.
    pub fn completions_served(&self) -> u64 {
        self.completions_served.load(Ordering::Relaxed)
    }

    /// Tokens actually produced, for reconciliation against a ledger.
    pub fn tokens_served(&self) -> u64 {
        self.tokens_served.load(Ordering::Relaxed)
    }

    /// Maps a prefix to its question and the number of committed steps.
    /// Committed steps are the blank-line-separated blocks after the
    /// statement.
    fn resolve(&self, prefix: &str) -> Result<(&QuestionWorld, usize), BackendError> {
        let q = self
            .world
            .questions
            .iter()
            .filter(|q| prefix.starts_with(&q.statement))
            .max_by_key(|q| q.statement.len())
            .ok_or(BackendError::UnknownQuestion)?;
        let rest = prefix[q.statement.len()..].trim();
        let depth = if rest.is_empty() {
            0
        } else {
            rest.split("\n\n").filter(|b| !b.trim().is_empty()).count()
        };
        if depth > q.num_steps {
            return Err(BackendError::PrefixTooDeep {
                depth,
                steps: q.num_steps,
            });
        }
        Ok((q, depth))
    }

    fn draw_answer(q: &QuestionWorld, rng: &mut SimRng) -> String {
        let roll = rng.unit_f64();
        let mut acc = 0.0;
        for (answer, p) in &q.answer_dist {
            acc += p;
            if roll < acc {
                return answer.clone();
            }
        }
        q.answer_dist
            .last()
            .map(|(a, _)| a.clone())
            .expect("validated non-empty distribution")
    }

    fn draw_wrong_answer(q: &QuestionWorld, rng: &mut SimRng) -> String {
        let wrong: Vec<&(String, f64)> = q
            .answer_dist
            .iter()
            .filter(|(a, _)| !answers_match(a, &q.gold_answer))
            .collect();
        let total: f64 = wrong.iter().map(|(_, p)| p).sum();
        if wrong.is_empty() || total <= 0.0 {
            return format!("incorrect_{}", rng.gen_range(4));
        }
        let roll = rng.unit_f64() * total;
        let mut acc = 0.0;
        for (answer, p) in &wrong {
            acc += p;
            if roll < acc {
                return answer.clone();
            }
        }
        wrong.last().expect("non-empty").0.clone()
    }

    fn generate_completion(&self, q: &QuestionWorld, depth: usize, rng: &mut SimRng) -> RawCompletion {
        let answer = if depth == 0 {
            Self::draw_answer(q, rng)
        } else if rng.gen_bool(q.recovery[depth]) {
            q.gold_answer.clone()
        } else {
            Self::draw_wrong_answer(q, rng)
        };
        let correct = answers_match(&answer, &q.gold_answer);

        // Planted structure applies only to fresh incorrect samples; rollouts
        // carry plain base profiles.
        let error_step = if depth == 0 && !correct {
            q.planted_error_step
        } else {
            None
        };
        let spurious_step = match (error_step, &q.spurious) {
            (Some(e), Some(s)) if e >= 4 && rng.gen_bool(s.prob) => {
                Some(2 + rng.gen_range((e - 3) as u64) as usize)
            }
            _ => None,
        };

        let mut tokens: Vec<TokenRecord> = Vec::new();
        for step in (depth + 1)..=q.num_steps {
            let profile = if Some(step) == error_step {
                q.effective_error_profile(step)
            } else if Some(step) == spurious_step {
                q.spurious.as_ref().expect("guarded above").profile.clone()
            } else {
                q.step_profiles[step - 1].clone()
            };
            for _ in 0..profile.tokens {
                let text = format!("t{} ", rng.gen_range(40));
                let logprob = -1.0 - profile.spread * rng.unit_f64();
                tokens.push(TokenRecord::new(text, logprob).expect("finite logprob"));
            }
            if step == q.num_steps {
                let spread = profile.spread;
                let text = format!("The answer is \\boxed{{{answer}}}.");
                let logprob = -1.0 - spread * rng.unit_f64();
                tokens.push(TokenRecord::new(text, logprob).expect("finite logprob"));
            } else if let Some(last) = tokens.last_mut() {
                last.text.push_str("\n\n");
            }
        }
        if depth == q.num_steps {
            // Nothing left to reason about; emit just the conclusion.
            let text = format!("The answer is \\boxed{{{answer}}}.");
            let logprob = -1.0 - 0.05 * rng.unit_f64();
            tokens.push(TokenRecord::new(text, logprob).expect("finite logprob"));
        }

        RawCompletion::from_tokens(tokens)
    }
}

impl CompletionProvider for SimProvider {
    fn sample(
        &self,
        request: &SamplingRequest,
        ledger: &CostLedger,
    ) -> Result<Vec<SampledSolution>, BackendError> {
        if request.n == 0 {
            return Err(BackendError::ZeroCompletions { n: 0 });
        }
        let (q, depth) = self.resolve(&request.prefix)?;

        let seed = mix_seed(&[
            self.world.base_seed,
            request.seed.unwrap_or(0xD1FA),
            fnv1a(request.prefix.as_bytes()),
            request.n as u64,
        ]);
        let mut root = SimRng::new(seed);

        let mut solutions = Vec::with_capacity(request.n);
        for k in 0..request.n {
            let mut rng = root.split(k as u64);
            let completion = self.generate_completion(q, depth, &mut rng);
            self.completions_served.fetch_add(1, Ordering::Relaxed);
            self.tokens_served
                .fetch_add(completion.tokens.len() as u64, Ordering::Relaxed);
            ledger.add_completions(1);
            ledger.add_tokens(completion.tokens.len() as u64);
            solutions.push(completion_to_solution(&q.id, &self.tag, &completion));
        }
        Ok(solutions)
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}
