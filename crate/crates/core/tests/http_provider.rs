//! HTTP provider and scorer behavior against the in-process stub server:
//! ledger reconciliation, chunking, retries, auth propagation, malformed
//! responses, and replay equivalence with the simulator.

use std::collections::VecDeque;

use unprm::backend::http::{EndpointConfig, HttpProvider};
use unprm::backend::retry::RetryPolicy;
use unprm::backend::scorer::HttpScorer;
use unprm::backend::sim::{QuestionWorld, SimProvider, SimulatedWorld};
use unprm::backend::stub::{StubBehavior, StubServer};
use unprm::backend::{
    BackendError, CompletionProvider, CostLedger, SamplingRequest, StepScorer,
};
use unprm::model::Question;

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 5,
        base_delay_ms: 1,
        factor: 1.5,
    }
}

fn endpoint(url: &str) -> EndpointConfig {
    let mut config = EndpointConfig::new(url, "stub-model");
    config.retry = fast_retry();
    config
}

fn two_step_tokens() -> Vec<(String, f64)> {
    vec![
        ("Step one.".into(), -0.5),
        ("\n\n".into(), -0.1),
        ("The answer is \\boxed{4}.".into(), -0.2),
    ]
}

#[test]
fn ledger_reconciles_exactly_with_served_counts() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        ..StubBehavior::default()
    })
    .unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();
    let ledger = CostLedger::new();

    let request = SamplingRequest::new("prompt", 5).unwrap();
    let solutions = provider.sample(&request, &ledger).unwrap();

    assert_eq!(solutions.len(), 5);
    let snapshot = ledger.snapshot();
    assert_eq!(snapshot.sampled_completions, 5);
    assert_eq!(snapshot.generated_tokens, 15);
    assert_eq!(snapshot.sampled_completions, server.completions_served());
    assert_eq!(snapshot.generated_tokens, server.tokens_served());

    // The completion parses into steps with a final answer.
    assert_eq!(solutions[0].steps.len(), 2);
    assert_eq!(solutions[0].final_answer.as_deref(), Some("4"));
    assert_eq!(solutions[0].generator_tag, "stub-model");
}

#[test]
fn oversized_requests_split_into_ordered_chunks() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        ..StubBehavior::default()
    })
    .unwrap();
    let mut config = endpoint(&server.url());
    config.max_n_per_call = 32;
    config.concurrency = 1; // keep request order deterministic
    let provider = HttpProvider::new(config).unwrap();
    let ledger = CostLedger::new();

    let request = SamplingRequest::new("prompt", 70).unwrap().with_seed(9);
    let solutions = provider.sample(&request, &ledger).unwrap();

    assert_eq!(solutions.len(), 70);
    let sizes: Vec<usize> = server.requests().iter().map(|r| r.n).collect();
    assert_eq!(sizes, vec![32, 32, 6]);
    assert_eq!(ledger.snapshot().sampled_completions, 70);
    assert_eq!(server.completions_served(), 70);
}

#[test]
fn scripted_429s_are_retried_until_success() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        fail_statuses: VecDeque::from([429, 429]),
        ..StubBehavior::default()
    })
    .unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();
    let ledger = CostLedger::new();

    let request = SamplingRequest::new("prompt", 1).unwrap();
    let solutions = provider.sample(&request, &ledger).unwrap();

    assert_eq!(solutions.len(), 1);
    assert_eq!(server.requests().len(), 3, "two failures then success");
    assert_eq!(ledger.snapshot().sampled_completions, 1);
    assert_eq!(server.completions_served(), 1, "failed calls served nothing");
}

#[test]
fn exhausted_retries_report_unavailable() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        fail_statuses: VecDeque::from([500, 503, 500, 503, 500]),
        ..StubBehavior::default()
    })
    .unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();

    let request = SamplingRequest::new("prompt", 1).unwrap();
    let error = provider.sample(&request, &CostLedger::new()).unwrap_err();
    assert!(
        matches!(error, BackendError::Unavailable { attempts: 5, .. }),
        "got {error:?}"
    );
}

#[test]
fn missing_logprobs_fail_instead_of_degrading() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        omit_logprobs: true,
        ..StubBehavior::default()
    })
    .unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();

    let request = SamplingRequest::new("prompt", 2).unwrap();
    let error = provider.sample(&request, &CostLedger::new()).unwrap_err();
    assert!(
        matches!(error, BackendError::MissingLogprobs),
        "got {error:?}"
    );
}

#[test]
fn bearer_token_comes_from_the_environment() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        ..StubBehavior::default()
    })
    .unwrap();

    // The provider captures the key at construction, so the variable can be
    // cleared immediately afterwards.
    std::env::set_var("UNPRM_API_KEY", "test-key-123");
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();
    std::env::remove_var("UNPRM_API_KEY");

    let request = SamplingRequest::new("prompt", 1).unwrap();
    provider.sample(&request, &CostLedger::new()).unwrap();

    let requests = server.requests();
    assert_eq!(
        requests[0].authorization.as_deref(),
        Some("Bearer test-key-123")
    );
}

#[test]
fn http_solutions_replay_sim_solutions_identically() {
    // Sample from the simulator, replay the exact token streams through the
    // stub, and require the HTTP provider to reconstruct the same solutions.
    let world = SimulatedWorld::new(
        11,
        vec![QuestionWorld::uniform(
            "r1",
            "Count the apples.",
            "6",
            vec![("6".into(), 0.5), ("7".into(), 0.5)],
            3,
            vec![0.5, 0.8, 0.8, 0.1],
        )],
    )
    .unwrap();
    let sim = SimProvider::new(world);
    let request = SamplingRequest::new("Count the apples.", 3)
        .unwrap()
        .with_seed(41);
    let sim_solutions = sim.sample(&request, &CostLedger::new()).unwrap();

    let replay: VecDeque<Vec<(String, f64)>> = sim_solutions
        .iter()
        .map(|s| {
            s.steps
                .iter()
                .flat_map(|step| step.tokens.iter())
                .map(|t| (t.text.clone(), t.logprob))
                .collect()
        })
        .collect();

    let server = StubServer::start(StubBehavior {
        replay: Some(replay),
        ..StubBehavior::default()
    })
    .unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();
    let http_solutions = provider.sample(&request, &CostLedger::new()).unwrap();

    assert_eq!(http_solutions.len(), sim_solutions.len());
    for (http, sim) in http_solutions.iter().zip(&sim_solutions) {
        assert_eq!(http.final_answer, sim.final_answer);
        assert_eq!(http.steps.len(), sim.steps.len());
        for (hs, ss) in http.steps.iter().zip(&sim.steps) {
            assert_eq!(hs.index, ss.index);
            assert_eq!(hs.text, ss.text);
            assert_eq!(hs.tokens, ss.tokens);
        }
        assert_eq!(http.all_logprobs(), sim.all_logprobs());
    }
}

#[test]
fn http_scorer_scores_steps_and_counts_invocations() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        score_response: Some(vec![0.9, 0.1]),
        ..StubBehavior::default()
    })
    .unwrap();
    let scorer = HttpScorer::new(server.url()).unwrap().with_retry(fast_retry());

    let question = Question::new("q1", "Count the apples.", "6").unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();
    let request = SamplingRequest::new("Count the apples.", 1).unwrap();
    let solution = provider
        .sample(&request, &CostLedger::new())
        .unwrap()
        .remove(0);

    let scores = scorer.score(&question, &solution, None).unwrap();
    assert_eq!(scores.scores(), &[0.9, 0.1]);
    assert_eq!(scores.min_score(), 0.1);
    assert_eq!(scorer.invocations(), 1);

    // The scoring request carried the step texts, not raw token soup.
    let score_request = server
        .requests()
        .into_iter()
        .find(|r| r.path == "/v1/score");
    assert!(score_request.is_some());
}

#[test]
fn wrong_score_cardinality_is_rejected() {
    let server = StubServer::start(StubBehavior {
        completion_tokens: two_step_tokens(),
        score_response: Some(vec![0.9, 0.1, 0.5]),
        ..StubBehavior::default()
    })
    .unwrap();
    let scorer = HttpScorer::new(server.url()).unwrap().with_retry(fast_retry());

    let question = Question::new("q1", "Count the apples.", "6").unwrap();
    let provider = HttpProvider::new(endpoint(&server.url())).unwrap();
    let request = SamplingRequest::new("Count the apples.", 1).unwrap();
    let solution = provider
        .sample(&request, &CostLedger::new())
        .unwrap()
        .remove(0);

    let error = scorer.score(&question, &solution, None).unwrap_err();
    assert!(
        matches!(error, BackendError::ScoreCardinality { got: 3, expected: 2 }),
        "got {error:?}"
    );
}
