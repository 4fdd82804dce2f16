use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::retry::RetryPolicy;
use super::BackendError;
use crate::model::{Question, SampledSolution};
use crate::rng::{fnv1a, mix_seed, SimRng};

/// Per-step scores in [0, 1], one per step, never empty. Construction
/// validates both, so downstream reductions (min, mean) are total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScoreVector(Vec<f64>);

impl StepScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self, BackendError> {
        if scores.is_empty() {
            return Err(BackendError::EmptyScores);
        }
        for (index, &value) in scores.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(BackendError::ScoreOutOfRange { index, value });
            }
        }
        Ok(StepScoreVector(scores))
    }

    pub fn scores(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Minimum step score; well-defined because the vector is non-empty.
    pub fn min_score(&self) -> f64 {
        self.0.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Scores each step of a candidate solution. Implementations count their
/// invocations so tests can prove when a path never consulted the scorer.
pub trait StepScorer: Send + Sync {
    /// `reference_labels`, when present, must have one entry per step. The
    /// oracle scorer requires them for solutions not verified correct; model
    /// scorers ignore them.
    fn score(
        &self,
        question: &Question,
        solution: &SampledSolution,
        reference_labels: Option<&[bool]>,
    ) -> Result<StepScoreVector, BackendError>;

    /// Number of `score` calls served so far.
    fn invocations(&self) -> u64;
}

/// Deterministic scorer that reads ground-truth labels.
///
/// A step labeled valid scores `1 - epsilon`, an erroneous step scores
/// `epsilon`. With `flip_prob > 0` each step's label is independently
/// inverted before scoring, using a seed derived from the solution content,
/// so repeated scoring of the same solution is stable.
pub struct OracleScorer {
    epsilon: f64,
    flip_prob: f64,
    seed: u64,
    invocations: AtomicU64,
}

impl OracleScorer {
    pub fn new(epsilon: f64) -> Self {
        OracleScorer {
            epsilon: epsilon.clamp(0.0, 0.5),
            flip_prob: 0.0,
            seed: 0,
            invocations: AtomicU64::new(0),
        }
    }

    pub fn with_flip_prob(mut self, flip_prob: f64) -> Self {
        self.flip_prob = flip_prob.clamp(0.0, 1.0);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl StepScorer for OracleScorer {
    fn score(
        &self,
        question: &Question,
        solution: &SampledSolution,
        reference_labels: Option<&[bool]>,
    ) -> Result<StepScoreVector, BackendError> {
        self.invocations.fetch_add(1, Ordering::Relaxed);

        let owned_all_true;
        let labels: &[bool] = match reference_labels {
            Some(l) => l,
            None if solution.is_correct == Some(true) => {
                owned_all_true = vec![true; solution.len()];
                &owned_all_true
            }
            None => return Err(BackendError::OracleNeedsLabels),
        };
        if labels.len() != solution.len() {
            return Err(BackendError::ScoreCardinality {
                got: labels.len(),
                expected: solution.len(),
            });
        }

        let mut rng = SimRng::new(mix_seed(&[
            self.seed,
            fnv1a(question.id.as_bytes()),
            solution.fingerprint(),
        ]));
        let scores = labels
            .iter()
            .map(|&label| {
                let flipped = self.flip_prob > 0.0 && rng.gen_bool(self.flip_prob);
                let effective = label != flipped;
                if effective {
                    1.0 - self.epsilon
                } else {
                    self.epsilon
                }
            })
            .collect();
        StepScoreVector::new(scores)
    }

    fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Serialize)]
struct ScoreHttpRequest<'a> {
    question_id: &'a str,
    statement: &'a str,
    steps: Vec<&'a str>,
}

#[derive(Debug, Deserialize)]
struct ScoreHttpResponse {
    scores: Vec<f64>,
}

/// Remote scorer speaking a minimal JSON protocol: POST `{base}/v1/score`
/// with the question and step texts, expect `{"scores": [...]}` with one
/// score per step. Reads `UNPRM_API_KEY` for bearer auth at construction.
pub struct HttpScorer {
    base_url: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    retry: RetryPolicy,
    invocations: AtomicU64,
}

impl HttpScorer {
    pub fn new(base_url: impl Into<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpScorer {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            api_key: std::env::var("UNPRM_API_KEY").ok(),
            retry: RetryPolicy::default(),
            invocations: AtomicU64::new(0),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl StepScorer for HttpScorer {
    fn score(
        &self,
        question: &Question,
        solution: &SampledSolution,
        _reference_labels: Option<&[bool]>,
    ) -> Result<StepScoreVector, BackendError> {
        self.invocations.fetch_add(1, Ordering::Relaxed);

        let body = ScoreHttpRequest {
            question_id: &question.id,
            statement: &question.statement,
            steps: solution.steps.iter().map(|s| s.text.as_str()).collect(),
        };
        let url = format!("{}/v1/score", self.base_url);

        let mut rng = SimRng::new(mix_seed(&[solution.fingerprint(), 0x5C0E]));
        let mut last_error = String::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                let delay = self.retry.jittered_delay_ms(attempt - 1, &mut rng);
                std::thread::sleep(std::time::Duration::from_millis(delay));
            }
            let mut req = self.client.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ScoreHttpResponse = resp
                            .json()
                            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
                        if parsed.scores.len() != solution.len() {
                            return Err(BackendError::ScoreCardinality {
                                got: parsed.scores.len(),
                                expected: solution.len(),
                            });
                        }
                        return StepScoreVector::new(parsed.scores);
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_error = format!("status {status}");
                        continue;
                    }
                    return Err(BackendError::Transport(format!("status {status}")));
                }
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts: self.retry.max_attempts,
            last_error,
        })
    }

    fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Step, TokenRecord};

    fn question() -> Question {
        Question::new("q1", "statement", "42").unwrap()
    }

    fn solution(steps: usize, answer: &str, correct: Option<bool>) -> SampledSolution {
        SampledSolution {
            question_id: "q1".into(),
            generator_tag: "t".into(),
            final_answer: Some(answer.to_string()),
            is_correct: correct,
            sequence_uncertainty: None,
            steps: (1..=steps)
                .map(|i| Step {
                    index: i,
                    text: format!("s{i}"),
                    tokens: vec![TokenRecord::new(format!("s{i}"), -1.0).unwrap()],
                })
                .collect(),
        }
    }

    #[test]
    fn score_vector_validates_contents() {
        assert!(matches!(
            StepScoreVector::new(vec![]),
            Err(BackendError::EmptyScores)
        ));
        assert!(matches!(
            StepScoreVector::new(vec![0.5, 1.2]),
            Err(BackendError::ScoreOutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            StepScoreVector::new(vec![f64::NAN]),
            Err(BackendError::ScoreOutOfRange { index: 0, .. })
        ));
        let v = StepScoreVector::new(vec![0.9, 0.2, 0.7]).unwrap();
        assert_eq!(v.min_score(), 0.2);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn oracle_scores_labels_with_epsilon() {
        let scorer = OracleScorer::new(0.1);
        let labels = [true, true, false];
        let v = scorer
            .score(&question(), &solution(3, "41", Some(false)), Some(&labels))
            .unwrap();
        assert_eq!(v.scores(), &[0.9, 0.9, 0.1]);
        assert_eq!(scorer.invocations(), 1);
    }

    #[test]
    fn oracle_defaults_correct_solutions_to_all_valid() {
        let scorer = OracleScorer::new(0.05);
        let v = scorer
            .score(&question(), &solution(2, "42", Some(true)), None)
            .unwrap();
        assert_eq!(v.scores(), &[0.95, 0.95]);
    }

    #[test]
    fn oracle_requires_labels_otherwise() {
        let scorer = OracleScorer::new(0.05);
        assert!(matches!(
            scorer.score(&question(), &solution(2, "41", Some(false)), None),
            Err(BackendError::OracleNeedsLabels)
        ));
        assert!(matches!(
            scorer.score(&question(), &solution(2, "41", None), None),
            Err(BackendError::OracleNeedsLabels)
        ));
    }

    #[test]
    fn oracle_rejects_mismatched_labels() {
        let scorer = OracleScorer::new(0.05);
        assert!(matches!(
            scorer.score(
                &question(),
                &solution(3, "41", Some(false)),
                Some(&[true, false])
            ),
            Err(BackendError::ScoreCardinality { got: 2, expected: 3 })
        ));
    }

    #[test]
    fn flip_rate_is_empirically_honored_and_stable_per_solution() {
        let scorer = OracleScorer::new(0.1).with_flip_prob(0.2).with_seed(5);
        let q = question();
        let mut flipped = 0usize;
        let total = 10_000;
        for i in 0..total {
            let s = solution(1, &format!("ans{i}"), Some(false));
            let v = scorer.score(&q, &s, Some(&[true])).unwrap();
            if v.scores()[0] == 0.1 {
                flipped += 1;
            }
            let again = scorer.score(&q, &s, Some(&[true])).unwrap();
            assert_eq!(v, again, "same solution must score identically");
        }
        let rate = flipped as f64 / total as f64;
        assert!((rate - 0.2).abs() < 0.02, "flip rate {rate}, want ~0.2");
    }
}
