//! Candidate pool generation and selection.
//!
//! For each question a pool of solutions is sampled at temperature, verified
//! against the gold answer, and given a sequence uncertainty. Selection then
//! keeps a few correct and a few incorrect candidates per question, either
//! the most uncertain ones (high entropy first) or the least typical ones
//! (lowest mean cosine similarity to their class).

use crate::backend::{BackendError, CompletionProvider, CostLedger, SamplingRequest};
use crate::model::{answers_match, Question, SampledSolution};
use crate::uncertainty::sequence_entropy;

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("pool size must be at least 1")]
    EmptyPool,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Decoding settings for pool generation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GenerateOptions {
    pub temperature: f64,
    pub max_tokens: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions {
            temperature: 0.8,
            max_tokens: 1024,
            seed: None,
        }
    }
}

/// Samples `k` solutions for a question, verifies answers, and computes
/// sequence uncertainties.
///
/// Solutions without an extractable answer stay format-invalid
/// (`is_correct` remains unset). When every sample is format-invalid the
/// pool is returned empty with a warning: nothing in it could be verified.
pub fn generate_pool(
    question: &Question,
    k: usize,
    provider: &dyn CompletionProvider,
    ledger: &CostLedger,
    options: &GenerateOptions,
) -> Result<Vec<SampledSolution>, DatagenError> {
    if k == 0 {
        return Err(DatagenError::EmptyPool);
    }
    let mut request = SamplingRequest::new(question.statement.clone(), k)?
        .with_temperature(options.temperature)
        .with_max_tokens(options.max_tokens);
    if let Some(seed) = options.seed {
        request = request.with_seed(seed);
    }

    let mut pool = provider.sample(&request, ledger)?;
    for solution in &mut pool {
        solution.question_id = question.id.clone();
        if let Some(answer) = &solution.final_answer {
            solution.is_correct = Some(answers_match(answer, &question.gold_answer));
        }
        if solution.token_count() > 0 {
            solution.sequence_uncertainty = sequence_entropy(&solution.all_logprobs()).ok();
        }
    }

    if pool.iter().all(|s| s.is_correct.is_none()) {
        log::warn!(
            "question '{}': all {k} samples are format-invalid; returning an empty pool",
            question.id
        );
        return Ok(Vec::new());
    }
    Ok(pool)
}

/// Selected candidates for one question, split by verified correctness.
/// Both lists are ordered by descending selection priority.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub question_id: String,
    pub correct: Vec<SampledSolution>,
    pub incorrect: Vec<SampledSolution>,
    /// Size of the verified pool the candidates were drawn from.
    pub pool_size: usize,
}

impl CandidateSet {
    /// Correct candidates first, then incorrect, each in priority order.
    pub fn into_solutions(self) -> Vec<SampledSolution> {
        let mut all = self.correct;
        all.extend(self.incorrect);
        all
    }
}

/// Keeps the `m` most uncertain correct and `n` most uncertain incorrect
/// solutions (descending sequence uncertainty; ties keep pool order).
/// Format-invalid and uncertainty-free solutions are excluded.
pub fn select_uncertain(pool: &[SampledSolution], m: usize, n: usize) -> CandidateSet {
    let (mut correct, mut incorrect) = verified_classes(pool);
    sort_by_uncertainty_desc(&mut correct);
    sort_by_uncertainty_desc(&mut incorrect);
    build_set(pool, correct, incorrect, m, n)
}

/// Keeps the `m` correct and `n` incorrect solutions least similar to their
/// own class (ascending mean pairwise cosine similarity over bag-of-token
/// counts; ties keep pool order). A singleton class has no peers, so its
/// lone member is selected by default.
pub fn select_similar(pool: &[SampledSolution], m: usize, n: usize) -> CandidateSet {
    let (mut correct, mut incorrect) = verified_classes(pool);
    sort_by_typicality_asc(&mut correct);
    sort_by_typicality_asc(&mut incorrect);
    build_set(pool, correct, incorrect, m, n)
}

fn verified_classes(pool: &[SampledSolution]) -> (Vec<(usize, SampledSolution)>, Vec<(usize, SampledSolution)>) {
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (i, s) in pool.iter().enumerate() {
        match s.is_correct {
            Some(true) => correct.push((i, s.clone())),
            Some(false) => incorrect.push((i, s.clone())),
            None => {}
        }
    }
    (correct, incorrect)
}

fn sort_by_uncertainty_desc(class: &mut [(usize, SampledSolution)]) {
    class.sort_by(|(ia, a), (ib, b)| {
        let ua = a.sequence_uncertainty.unwrap_or(f64::NEG_INFINITY);
        let ub = b.sequence_uncertainty.unwrap_or(f64::NEG_INFINITY);
        ub.partial_cmp(&ua)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ia.cmp(ib))
    });
}

fn sort_by_typicality_asc(class: &mut Vec<(usize, SampledSolution)>) {
    let vectors: Vec<Vec<(String, f64)>> = class
        .iter()
        .map(|(_, s)| token_bag(s))
        .collect();
    let mut keyed: Vec<(f64, usize, SampledSolution)> = class
        .drain(..)
        .enumerate()
        .map(|(i, (pool_idx, s))| {
            let mut total = 0.0;
            let mut peers = 0usize;
            for (j, other) in vectors.iter().enumerate() {
                if i != j {
                    total += cosine(&vectors[i], other);
                    peers += 1;
                }
            }
            // No peers: typicality is undefined, treat as minimal so the
            // singleton is selected.
            let mean = if peers == 0 { f64::NEG_INFINITY } else { total / peers as f64 };
            (mean, pool_idx, s)
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
    });
    class.extend(keyed.into_iter().map(|(_, idx, s)| (idx, s)));
}

fn build_set(
    pool: &[SampledSolution],
    correct: Vec<(usize, SampledSolution)>,
    incorrect: Vec<(usize, SampledSolution)>,
    m: usize,
    n: usize,
) -> CandidateSet {
    let question_id = pool
        .first()
        .map(|s| s.question_id.clone())
        .unwrap_or_default();
    CandidateSet {
        question_id,
        correct: correct.into_iter().take(m).map(|(_, s)| s).collect(),
        incorrect: incorrect.into_iter().take(n).map(|(_, s)| s).collect(),
        pool_size: pool.len(),
    }
}

/// Sorted bag of token texts with counts, the vector space for similarity.
fn token_bag(solution: &SampledSolution) -> Vec<(String, f64)> {
    let mut counts = std::collections::BTreeMap::new();
    for step in &solution.steps {
        for token in &step.tokens {
            *counts.entry(token.text.clone()).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

/// Cosine similarity of two sorted sparse vectors; 0 when either is empty.
fn cosine(a: &[(String, f64)], b: &[(String, f64)]) -> f64 {
    let norm_a: f64 = a.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let mut dot = 0.0;
    let mut i = 0;
    let mut j = 0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot / (norm_a * norm_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::sim::{QuestionWorld, SimProvider, SimulatedWorld};
    use crate::backend::RawCompletion;
    use crate::model::{Step, TokenRecord};

    fn world() -> SimulatedWorld {
        let q = QuestionWorld::uniform(
            "q1",
            "What is 6 times 7?",
            "42",
            vec![("42".into(), 0.6), ("41".into(), 0.4)],
            3,
            vec![0.6, 0.6, 0.6, 0.6],
        );
        SimulatedWorld::new(11, vec![q]).unwrap()
    }

    fn question() -> Question {
        Question::new("q1", "What is 6 times 7?", "42").unwrap()
    }

    fn tagged(id: usize, correct: bool, uncertainty: f64, words: &[&str]) -> SampledSolution {
        SampledSolution {
            question_id: "q1".into(),
            generator_tag: format!("g{id}"),
            final_answer: Some(if correct { "42".into() } else { "41".into() }),
            is_correct: Some(correct),
            sequence_uncertainty: Some(uncertainty),
            steps: vec![Step {
                index: 1,
                text: words.join(" "),
                tokens: words
                    .iter()
                    .map(|w| TokenRecord::new(format!("{w} "), -1.0).unwrap())
                    .collect(),
            }],
        }
    }

    #[test]
    fn generated_pool_is_verified_and_scored() {
        let provider = SimProvider::new(world());
        let ledger = CostLedger::new();
        let options = GenerateOptions {
            seed: Some(4),
            ..GenerateOptions::default()
        };
        let pool = generate_pool(&question(), 32, &provider, &ledger, &options).unwrap();
        assert_eq!(pool.len(), 32);
        for s in &pool {
            assert_eq!(s.question_id, "q1");
            assert!(s.is_correct.is_some());
            assert!(s.sequence_uncertainty.is_some());
            let expected = answers_match(s.final_answer.as_deref().unwrap(), "42");
            assert_eq!(s.is_correct, Some(expected));
        }
        assert!(pool.iter().any(|s| s.is_correct == Some(true)));
        assert!(pool.iter().any(|s| s.is_correct == Some(false)));
        assert_eq!(ledger.snapshot().sampled_completions, 32);
    }

    #[test]
    fn all_invalid_pool_comes_back_empty() {
        struct BlankProvider;
        impl CompletionProvider for BlankProvider {
            fn sample(
                &self,
                request: &SamplingRequest,
                ledger: &CostLedger,
            ) -> Result<Vec<SampledSolution>, BackendError> {
                ledger.add_completions(request.n as u64);
                Ok((0..request.n)
                    .map(|_| {
                        let completion = RawCompletion::from_tokens(vec![
                            TokenRecord::new("no conclusion here", -1.0).unwrap(),
                        ]);
                        crate::backend::completion_to_solution("", "blank", &completion)
                    })
                    .collect())
            }
            fn tag(&self) -> &str {
                "blank"
            }
        }

        let pool = generate_pool(
            &question(),
            4,
            &BlankProvider,
            &CostLedger::new(),
            &GenerateOptions::default(),
        )
        .unwrap();
        assert!(pool.is_empty());
    }

    #[test]
    fn uncertain_selection_takes_top_entropy_per_class() {
        let pool = vec![
            tagged(0, true, 0.5, &["a"]),
            tagged(1, true, 2.0, &["b"]),
            tagged(2, true, 1.0, &["c"]),
            tagged(3, false, 0.1, &["d"]),
            tagged(4, false, 3.0, &["e"]),
            tagged(5, false, 2.5, &["f"]),
        ];
        let set = select_uncertain(&pool, 2, 2);
        assert_eq!(set.pool_size, 6);
        let correct_tags: Vec<_> = set.correct.iter().map(|s| s.generator_tag.as_str()).collect();
        assert_eq!(correct_tags, vec!["g1", "g2"]);
        let incorrect_tags: Vec<_> = set.incorrect.iter().map(|s| s.generator_tag.as_str()).collect();
        assert_eq!(incorrect_tags, vec!["g4", "g5"]);

        // Descending order within the selection.
        let u: Vec<f64> = set
            .incorrect
            .iter()
            .map(|s| s.sequence_uncertainty.unwrap())
            .collect();
        assert!(u[0] >= u[1]);
    }

    #[test]
    fn uncertainty_ties_keep_pool_order() {
        let pool = vec![
            tagged(0, true, 1.0, &["a"]),
            tagged(1, true, 1.0, &["b"]),
            tagged(2, true, 1.0, &["c"]),
        ];
        let set = select_uncertain(&pool, 2, 0);
        let tags: Vec<_> = set.correct.iter().map(|s| s.generator_tag.as_str()).collect();
        assert_eq!(tags, vec!["g0", "g1"]);
    }

    #[test]
    fn similar_selection_prefers_the_outlier() {
        // Three near-identical solutions and one outlier.
        let pool = vec![
            tagged(0, false, 1.0, &["x", "y", "z"]),
            tagged(1, false, 1.0, &["x", "y", "w"]),
            tagged(2, false, 1.0, &["x", "y", "z"]),
            tagged(3, false, 1.0, &["p", "q", "r"]),
        ];
        let set = select_similar(&pool, 0, 1);
        assert_eq!(set.incorrect.len(), 1);
        assert_eq!(set.incorrect[0].generator_tag, "g3");
    }

    #[test]
    fn singleton_class_is_selected_by_default() {
        let pool = vec![tagged(0, true, 1.0, &["only"])];
        let set = select_similar(&pool, 1, 1);
        assert_eq!(set.correct.len(), 1);
        assert!(set.incorrect.is_empty());
    }

    #[test]
    fn selection_shortfall_returns_what_exists() {
        let pool = vec![tagged(0, true, 1.0, &["a"]), tagged(1, false, 1.0, &["b"])];
        let set = select_uncertain(&pool, 5, 5);
        assert_eq!(set.correct.len(), 1);
        assert_eq!(set.incorrect.len(), 1);
    }

    #[test]
    fn zero_k_is_rejected() {
        let provider = SimProvider::new(world());
        assert!(matches!(
            generate_pool(
                &question(),
                0,
                &provider,
                &CostLedger::new(),
                &GenerateOptions::default()
            ),
            Err(DatagenError::EmptyPool)
        ));
    }

    #[test]
    fn cosine_brute_force_oracle() {
        // Hand-computed: vectors {x:2, y:1} and {x:1, z:1}: dot = 2,
        // norms sqrt(5) and sqrt(2) => cos = 2 / sqrt(10).
        let a = vec![("x".to_string(), 2.0), ("y".to_string(), 1.0)];
        let b = vec![("x".to_string(), 1.0), ("z".to_string(), 1.0)];
        let got = cosine(&a, &b);
        assert!((got - 2.0 / 10.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(cosine(&a, &[]), 0.0);
    }
}
