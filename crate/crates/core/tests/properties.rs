//! Randomized invariants: entropy bounds, canonicalization idempotence,
//! split/export round trips, label monotonicity, aggregation reductions.

use proptest::prelude::*;

use unprm::aggregate::{group_pairs, pairs_wrf, top_group};
use unprm::annotate::{mc_ppl, RolloutBatch};
use unprm::backend::scorer::OracleScorer;
use unprm::backend::StepScorer;
use unprm::evalkit::{export_training_record, parse_training_record};
use unprm::model::{
    answers_match, normalize_answer, reconstruct_text, split_into_steps, LabeledSolution,
    Question, SampledSolution, Step, TokenRecord,
};
use unprm::uncertainty::{sequence_entropy, softmax_probs};
use unprm::{hmr_vote, majority_vote, VoteInput};

fn logprobs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-12.0..0.0f64, 1..48)
}

fn one_step_solution(answer: &str) -> SampledSolution {
    SampledSolution {
        question_id: "q".into(),
        generator_tag: "t".into(),
        final_answer: Some(answer.to_string()),
        is_correct: Some(true),
        sequence_uncertainty: None,
        steps: vec![Step {
            index: 1,
            text: "s".into(),
            tokens: vec![TokenRecord::new("s", -1.0).unwrap()],
        }],
    }
}

proptest! {
    #[test]
    fn entropy_is_bounded_and_shift_invariant(values in logprobs(), shift in -6.0..6.0f64) {
        let entropy = sequence_entropy(&values).unwrap();
        prop_assert!(entropy >= -1e-12);
        prop_assert!(entropy <= (values.len() as f64).ln() + 1e-12);

        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let shifted_entropy = sequence_entropy(&shifted).unwrap();
        prop_assert!(
            (entropy - shifted_entropy).abs() < 1e-9,
            "entropy moved {} under a constant shift",
            (entropy - shifted_entropy).abs()
        );
    }

    #[test]
    fn softmax_is_a_distribution(values in logprobs()) {
        let probs = softmax_probs(&values).unwrap();
        prop_assert_eq!(probs.len(), values.len());
        prop_assert!(probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "probabilities sum to {total}");
    }

    #[test]
    fn normalize_answer_is_idempotent(raw in "[ -~]{0,40}") {
        let once = normalize_answer(&raw);
        let twice = normalize_answer(&once);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn answers_match_is_reflexive_and_symmetric(a in "[ -~]{0,24}", b in "[ -~]{0,24}") {
        prop_assert!(answers_match(&a, &a));
        prop_assert_eq!(answers_match(&a, &b), answers_match(&b, &a));
    }

    #[test]
    fn split_reconstructs_any_tokenization(
        parts in prop::collection::vec("[a-z][a-z ]{0,11}", 1..5),
        chunk_lens in prop::collection::vec(1..5usize, 1..64),
    ) {
        let text = parts.join("\n\n");

        // Carve the text into tokens at arbitrary char boundaries.
        let chars: Vec<char> = text.chars().collect();
        let mut tokens = Vec::new();
        let mut pos = 0usize;
        let mut lens = chunk_lens.iter().cycle();
        while pos < chars.len() {
            let take = (*lens.next().unwrap()).min(chars.len() - pos);
            let piece: String = chars[pos..pos + take].iter().collect();
            tokens.push(TokenRecord::new(piece, -1.0).unwrap());
            pos += take;
        }

        let steps = split_into_steps(&text, &tokens).unwrap();
        prop_assert_eq!(steps.len(), parts.len());
        for (step, part) in steps.iter().zip(&parts) {
            prop_assert_eq!(&step.text, part);
        }
        prop_assert_eq!(reconstruct_text(&steps), text);
        let total: usize = steps.iter().map(|s| s.tokens.len()).sum();
        prop_assert_eq!(total, tokens.len());
    }

    #[test]
    fn split_at_error_labels_are_monotone(steps in 1..12usize, error in 1..12usize) {
        prop_assume!(error <= steps);
        let solution = SampledSolution {
            question_id: "q".into(),
            generator_tag: "t".into(),
            final_answer: Some("0".into()),
            is_correct: Some(false),
            sequence_uncertainty: None,
            steps: (1..=steps)
                .map(|i| Step {
                    index: i,
                    text: format!("s{i}"),
                    tokens: vec![TokenRecord::new("w", -1.0).unwrap()],
                })
                .collect(),
        };
        let labeled = LabeledSolution::split_at_error(
            solution,
            error,
            unprm::AnnotationMethod::Uncertainty,
        )
        .unwrap();
        prop_assert_eq!(labeled.error_index, Some(error));
        // Monotone: once false, never true again.
        let first_false = labeled.labels.iter().position(|&l| !l).unwrap();
        prop_assert_eq!(first_false + 1, error);
        prop_assert!(labeled.labels[first_false..].iter().all(|&l| !l));
        prop_assert!(labeled.labels[..first_false].iter().all(|&l| l));
    }

    #[test]
    fn mc_ppl_stays_in_the_unit_interval(
        log_ppls in prop::collection::vec(0.01..8.0f64, 1..24),
        mask in prop::collection::vec(any::<bool>(), 24),
    ) {
        let trajectories: Vec<SampledSolution> = log_ppls
            .iter()
            .map(|&x| {
                let mut s = one_step_solution("a");
                s.steps[0].tokens = vec![TokenRecord::new("w", -x).unwrap()];
                s
            })
            .collect();
        let correct_indices: Vec<usize> = (0..trajectories.len())
            .filter(|&i| mask[i])
            .collect();
        let all_correct = correct_indices.len() == trajectories.len();
        let none_correct = correct_indices.is_empty();
        let batch = RolloutBatch {
            prefix_step_index: 0,
            trajectories,
            correct_indices,
            provider_error: false,
        };
        let value = mc_ppl(&batch).unwrap();
        prop_assert!((0.0..=1.0).contains(&value), "mc_ppl {value}");
        if all_correct {
            prop_assert!((value - 1.0).abs() < 1e-12);
        }
        if none_correct {
            prop_assert!(value.abs() < 1e-12);
        }
    }

    #[test]
    fn hmr_shortcut_agrees_with_majority_and_never_scores(
        majority_count in 3..10usize,
        minority in 0..3usize,
    ) {
        // One answer holds at least half of the votes by construction.
        prop_assume!(majority_count as f64 >= (majority_count + minority) as f64 / 2.0);
        let mut candidates = Vec::new();
        for _ in 0..majority_count {
            candidates.push(VoteInput::bare(one_step_solution("7")));
        }
        for i in 0..minority {
            candidates.push(VoteInput::bare(one_step_solution(&format!("x{i}"))));
        }

        let question = Question::new("q", "statement", "7").unwrap();
        let scorer = OracleScorer::new(0.1);
        let hybrid = hmr_vote(&question, &candidates, &scorer).unwrap();
        let majority = majority_vote(&candidates).unwrap();

        prop_assert!(hybrid.used_majority);
        prop_assert_eq!(hybrid.answer, majority.answer);
        prop_assert_eq!(scorer.invocations(), 0, "majority branch must not score");
    }

    #[test]
    fn wrf_alpha_endpoints_reduce_to_frequency_and_reward(
        pairs in prop::collection::vec(("[a-d]", 0.0..1.0f64), 1..12),
    ) {
        let pairs: Vec<(String, f64)> = pairs;
        let groups = group_pairs(&pairs);

        // alpha = 0: frequency only, ties keep the earliest group.
        let by_frequency = pairs_wrf(&pairs, 0.0).unwrap().unwrap();
        let top = top_group(&groups).unwrap();
        prop_assert_eq!(&by_frequency, &top.answer);

        // alpha = 1: mean reward only, ties keep the earliest group.
        let by_reward = pairs_wrf(&pairs, 1.0).unwrap().unwrap();
        let mut best = 0usize;
        for (i, g) in groups.iter().enumerate() {
            if g.mean_reward() > groups[best].mean_reward() {
                best = i;
            }
        }
        prop_assert_eq!(&by_reward, &groups[best].answer);
    }

    #[test]
    fn training_export_round_trips_exactly(
        problem_tail in prop::collection::vec(prop::sample::select(vec!['a', 'ş', '\\', '\n', ' ', '+']), 0..16),
        step_tails in prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!['b', 'ş', '\\', '\n', ' ', '-']), 0..12),
            1..5,
        ),
        error_choice in any::<prop::sample::Index>(),
        correct in any::<bool>(),
    ) {
        let problem: String = std::iter::once('p').chain(problem_tail).collect();
        let step_texts: Vec<String> = step_tails
            .into_iter()
            .map(|tail| std::iter::once('x').chain(tail).collect())
            .collect();

        let solution = SampledSolution {
            question_id: "q".into(),
            generator_tag: "t".into(),
            final_answer: Some("0".into()),
            is_correct: Some(correct),
            sequence_uncertainty: None,
            steps: step_texts
                .iter()
                .enumerate()
                .map(|(i, text)| Step {
                    index: i + 1,
                    text: text.clone(),
                    tokens: vec![TokenRecord::new("w", -1.0).unwrap()],
                })
                .collect(),
        };
        let labeled = if correct {
            LabeledSolution::all_true(solution).unwrap()
        } else {
            let error = error_choice.index(step_texts.len()) + 1;
            LabeledSolution::split_at_error(
                solution,
                error,
                unprm::AnnotationMethod::Uncertainty,
            )
            .unwrap()
        };

        let record = export_training_record(&problem, &labeled);
        let parsed = parse_training_record(&record).unwrap();
        prop_assert_eq!(parsed.problem, problem);
        prop_assert_eq!(parsed.steps, step_texts);
        prop_assert_eq!(parsed.labels, labeled.labels);
    }
}
