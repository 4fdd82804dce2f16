use serde::{Deserialize, Serialize};

use super::ModelError;

/// Logprobs below this floor are clamped at construction. The floor keeps
/// downstream exponentials finite without disturbing realistic values.
pub const LOGPROB_FLOOR: f64 = -1.0e4;

/// A problem statement with its reference answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub statement: String,
    pub gold_answer: String,
}

impl Question {
    pub fn new(
        id: impl Into<String>,
        statement: impl Into<String>,
        gold_answer: impl Into<String>,
    ) -> Result<Self, ModelError> {
        let q = Question {
            id: id.into(),
            statement: statement.into(),
            gold_answer: gold_answer.into(),
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, value) in [
            ("id", &self.id),
            ("statement", &self.statement),
            ("gold_answer", &self.gold_answer),
        ] {
            if value.trim().is_empty() {
                return Err(ModelError::EmptyQuestionField {
                    id: self.id.clone(),
                    field,
                });
            }
        }
        Ok(())
    }
}

/// One generated token with its log-probability.
///
/// The logprob is clamped into `[LOGPROB_FLOOR, +inf)` at construction; NaN
/// and infinities are rejected. Values above zero are preserved as-is so
/// that provider quirks remain visible; consumers that require `<= 0`
/// (perplexity) validate at the point of use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    pub logprob: f64,
}

impl TokenRecord {
    pub fn new(text: impl Into<String>, logprob: f64) -> Result<Self, ModelError> {
        if !logprob.is_finite() {
            return Err(ModelError::NonFiniteLogprob { value: logprob });
        }
        Ok(TokenRecord {
            text: text.into(),
            logprob: logprob.max(LOGPROB_FLOOR),
        })
    }
}

/// A contiguous reasoning step: its visible text and the tokens it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// 1-based position within the solution.
    pub index: usize,
    pub text: String,
    pub tokens: Vec<TokenRecord>,
}

/// A complete sampled solution for one question.
///
/// `final_answer` is `None` when no answer could be extracted (the solution
/// is then format-invalid); `is_correct` is `None` until verified against the
/// gold answer; `sequence_uncertainty` is `None` until computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSolution {
    pub question_id: String,
    pub generator_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_correct: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_uncertainty: Option<f64>,
    pub steps: Vec<Step>,
}

impl SampledSolution {
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// All token logprobs in generation order.
    pub fn all_logprobs(&self) -> Vec<f64> {
        self.steps
            .iter()
            .flat_map(|s| s.tokens.iter().map(|t| t.logprob))
            .collect()
    }

    /// Total token count across steps.
    pub fn token_count(&self) -> usize {
        self.steps.iter().map(|s| s.tokens.len()).sum()
    }

    /// A stable fingerprint of the solution content, used to derive
    /// per-solution seeds.
    pub fn fingerprint(&self) -> u64 {
        let mut acc = crate::rng::fnv1a(self.question_id.as_bytes());
        for step in &self.steps {
            acc = crate::rng::mix64(acc, crate::rng::fnv1a(step.text.as_bytes()));
        }
        if let Some(ans) = &self.final_answer {
            acc = crate::rng::mix64(acc, crate::rng::fnv1a(ans.as_bytes()));
        }
        acc
    }
}

/// How a solution's step labels were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMethod {
    Uncertainty,
    BinarySearch,
    Random,
    /// A verified-correct solution; every step is labeled valid.
    AllTrue,
}

impl AnnotationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnnotationMethod::Uncertainty => "uncertainty",
            AnnotationMethod::BinarySearch => "binary_search",
            AnnotationMethod::Random => "random",
            AnnotationMethod::AllTrue => "all_true",
        }
    }
}

/// A solution with per-step validity labels.
///
/// Invariant: labels have the form `true^a false^b` with `a + b` equal to the
/// step count. `error_index` is the 1-based position of the first `false`
/// label and is `None` exactly when every label is `true`. Construction
/// enforces both; use [`LabeledSolution::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSolution {
    #[serde(flatten)]
    pub solution: SampledSolution,
    pub labels: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_index: Option<usize>,
    pub annotation_method: AnnotationMethod,
    /// Number of candidate steps probed before the error was located.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates_tried: Option<usize>,
    /// 0-based rank of the chosen error step in the uncertainty-delta
    /// ordering (0 = largest delta).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_delta_rank: Option<usize>,
}

impl LabeledSolution {
    pub fn new(
        solution: SampledSolution,
        labels: Vec<bool>,
        annotation_method: AnnotationMethod,
    ) -> Result<Self, ModelError> {
        let error_index = validate_labels(&labels, solution.len())?;
        Ok(LabeledSolution {
            solution,
            labels,
            error_index,
            annotation_method,
            candidates_tried: None,
            error_delta_rank: None,
        })
    }

    /// Labels every step valid (for verified-correct solutions).
    pub fn all_true(solution: SampledSolution) -> Result<Self, ModelError> {
        let labels = vec![true; solution.len()];
        LabeledSolution::new(solution, labels, AnnotationMethod::AllTrue)
    }

    /// Labels steps `1..error_index` valid and `error_index..` erroneous.
    pub fn split_at_error(
        solution: SampledSolution,
        error_index: usize,
        annotation_method: AnnotationMethod,
    ) -> Result<Self, ModelError> {
        let steps = solution.len();
        if error_index == 0 || error_index > steps {
            return Err(ModelError::ErrorIndexOutOfRange {
                index: error_index,
                steps,
            });
        }
        let labels = (1..=steps).map(|t| t < error_index).collect();
        LabeledSolution::new(solution, labels, annotation_method)
    }
}

fn validate_labels(labels: &[bool], steps: usize) -> Result<Option<usize>, ModelError> {
    if labels.len() != steps {
        return Err(ModelError::LabelCardinality {
            labels: labels.len(),
            steps,
        });
    }
    let first_false = labels.iter().position(|&l| !l);
    if let Some(ff) = first_false {
        if labels[ff..].iter().any(|&l| l) {
            return Err(ModelError::NonMonotoneLabels { error_step: ff + 1 });
        }
    }
    Ok(first_false.map(|i| i + 1))
}

/// A tolerant on-disk row: a sampled solution with optional label fields.
///
/// Pool files carry bare solutions; annotated files carry labels too. This
/// record reads either and converts to the validated types on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    #[serde(flatten)]
    pub solution: SampledSolution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation_method: Option<AnnotationMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates_tried: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_delta_rank: Option<usize>,
}

impl SolutionRecord {
    pub fn bare(solution: SampledSolution) -> Self {
        SolutionRecord {
            solution,
            labels: None,
            error_index: None,
            annotation_method: None,
            candidates_tried: None,
            error_delta_rank: None,
        }
    }

    /// Converts to a validated labeled solution. Fails when labels are
    /// missing or violate the monotone form.
    pub fn into_labeled(self) -> Result<LabeledSolution, ModelError> {
        let labels = self.labels.ok_or(ModelError::LabelCardinality {
            labels: 0,
            steps: self.solution.len(),
        })?;
        let method = self.annotation_method.unwrap_or(AnnotationMethod::Random);
        let mut labeled = LabeledSolution::new(self.solution, labels, method)?;
        labeled.candidates_tried = self.candidates_tried;
        labeled.error_delta_rank = self.error_delta_rank;
        Ok(labeled)
    }
}

impl From<LabeledSolution> for SolutionRecord {
    fn from(l: LabeledSolution) -> Self {
        SolutionRecord {
            solution: l.solution,
            labels: Some(l.labels),
            error_index: l.error_index,
            annotation_method: Some(l.annotation_method),
            candidates_tried: l.candidates_tried,
            error_delta_rank: l.error_delta_rank,
        }
    }
}
