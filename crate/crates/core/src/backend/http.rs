use std::collections::VecDeque;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::retry::RetryPolicy;
use super::{
    completion_to_solution, BackendError, CompletionProvider, CostLedger, RawCompletion,
    SamplingRequest,
};
use crate::model::{SampledSolution, TokenRecord};
use crate::rng::{fnv1a, mix_seed, SimRng};

fn default_max_n() -> usize {
    32
}
fn default_concurrency() -> usize {
    8
}
fn default_timeout() -> u64 {
    120
}

/// Connection settings for an OpenAI-compatible completions endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Requests for more completions than this are split into chunks.
    #[serde(default = "default_max_n")]
    pub max_n_per_call: usize,
    /// Maximum chunk requests in flight at once.
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Tag stamped on produced solutions; defaults to the model name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_tag: Option<String>,
    /// Value of the `logprobs` request field (how many alternatives to
    /// return per token; 0 still returns the chosen tokens' logprobs).
    #[serde(default)]
    pub logprobs: u32,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model: model.into(),
            max_n_per_call: default_max_n(),
            concurrency: default_concurrency(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
            generator_tag: None,
            logprobs: 0,
        }
    }
}

#[derive(Serialize)]
struct CompletionsRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: usize,
    logprobs: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct CompletionsResponse {
    choices: Vec<ChoicePayload>,
}

#[derive(Deserialize)]
struct ChoicePayload {
    #[serde(default)]
    index: Option<usize>,
    text: String,
    logprobs: Option<LogprobsPayload>,
}

#[derive(Deserialize)]
struct LogprobsPayload {
    tokens: Vec<String>,
    token_logprobs: Vec<Option<f64>>,
}

/// OpenAI-compatible completion provider.
///
/// A request for n completions is split into ceil(n / max_n_per_call)
/// chunks processed by at most `concurrency` worker threads; results are
/// reassembled in request order. Each chunk retries independently on 429
/// and 5xx with full-jitter exponential backoff. The bearer token, when the
/// endpoint needs one, comes from the `UNPRM_API_KEY` environment variable
/// at construction time.
pub struct HttpProvider {
    config: EndpointConfig,
    tag: String,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpProvider {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let tag = config
            .generator_tag
            .clone()
            .unwrap_or_else(|| config.model.clone());
        Ok(HttpProvider {
            config,
            tag,
            client,
            api_key: std::env::var("UNPRM_API_KEY").ok(),
        })
    }

    fn fetch_chunk(
        &self,
        request: &SamplingRequest,
        chunk_index: usize,
        chunk_n: usize,
    ) -> Result<Vec<RawCompletion>, BackendError> {
        let url = format!(
            "{}/v1/completions",
            self.config.base_url.trim_end_matches('/')
        );
        // Distinct per-chunk seeds keep a seed-honoring provider from
        // returning identical samples in every chunk.
        let seed = request.seed.map(|s| s.wrapping_add(chunk_index as u64));
        let body = CompletionsRequest {
            model: &self.config.model,
            prompt: &request.prefix,
            n: chunk_n,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            logprobs: self.config.logprobs,
            seed,
        };

        let mut rng = SimRng::new(mix_seed(&[
            fnv1a(request.prefix.as_bytes()),
            chunk_index as u64,
            0x7E7F,
        ]));
        let mut last_error = String::new();
        for attempt in 0..self.config.retry.max_attempts {
            if attempt > 0 {
                let delay = self.config.retry.jittered_delay_ms(attempt - 1, &mut rng);
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
                        let parsed: CompletionsResponse = resp
                            .json()
                            .map_err(|e| BackendError::BadResponse(e.to_string()))?;
                        return convert_choices(parsed, chunk_n);
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
            attempts: self.config.retry.max_attempts,
            last_error,
        })
    }
}

/// Splits n into chunks of at most `max` preserving order: 70 with max 32
/// becomes [32, 32, 6].
pub(crate) fn chunk_sizes(n: usize, max: usize) -> Vec<usize> {
    let max = max.max(1);
    let mut sizes = Vec::with_capacity(n.div_ceil(max));
    let mut remaining = n;
    while remaining > 0 {
        let take = remaining.min(max);
        sizes.push(take);
        remaining -= take;
    }
    sizes
}

fn convert_choices(
    response: CompletionsResponse,
    expected: usize,
) -> Result<Vec<RawCompletion>, BackendError> {
    if response.choices.len() != expected {
        return Err(BackendError::CompletionCount {
            got: response.choices.len(),
            expected,
        });
    }
    let mut choices = response.choices;
    choices.sort_by_key(|c| c.index.unwrap_or(usize::MAX));

    let mut completions = Vec::with_capacity(choices.len());
    for choice in choices {
        let payload = choice.logprobs.ok_or(BackendError::MissingLogprobs)?;
        if payload.tokens.len() != payload.token_logprobs.len() {
            return Err(BackendError::BadResponse(format!(
                "{} tokens but {} token_logprobs",
                payload.tokens.len(),
                payload.token_logprobs.len()
            )));
        }
        let tokens: Result<Vec<TokenRecord>, _> = payload
            .tokens
            .into_iter()
            .zip(payload.token_logprobs)
            // A null logprob (some providers emit one for the first token)
            // is treated as certainty.
            .map(|(text, lp)| TokenRecord::new(text, lp.unwrap_or(0.0)))
            .collect();
        completions.push(RawCompletion {
            text: choice.text,
            tokens: tokens?,
        });
    }
    Ok(completions)
}

impl CompletionProvider for HttpProvider {
    fn sample(
        &self,
        request: &SamplingRequest,
        ledger: &CostLedger,
    ) -> Result<Vec<SampledSolution>, BackendError> {
        if request.n == 0 {
            return Err(BackendError::ZeroCompletions { n: 0 });
        }

        let sizes = chunk_sizes(request.n, self.config.max_n_per_call);
        let queue: Mutex<VecDeque<(usize, usize)>> =
            Mutex::new(sizes.iter().copied().enumerate().collect());
        let results: Mutex<Vec<Option<Result<Vec<RawCompletion>, BackendError>>>> =
            Mutex::new((0..sizes.len()).map(|_| None).collect());

        let workers = self.config.concurrency.max(1).min(sizes.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let job = queue.lock().expect("chunk queue").pop_front();
                    let Some((index, size)) = job else { break };
                    let result = self.fetch_chunk(request, index, size);
                    if let Ok(chunk) = &result {
                        let tokens: u64 = chunk.iter().map(|c| c.tokens.len() as u64).sum();
                        ledger.add_completions(chunk.len() as u64);
                        ledger.add_tokens(tokens);
                    }
                    results.lock().expect("chunk results")[index] = Some(result);
                });
            }
        });

        let mut solutions = Vec::with_capacity(request.n);
        for slot in results.into_inner().expect("chunk results") {
            let chunk = slot.expect("every chunk processed")?;
            for completion in chunk {
                // The provider cannot know the caller's question id; callers
                // stamp it after sampling.
                solutions.push(completion_to_solution("", &self.tag, &completion));
            }
        }
        Ok(solutions)
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}
