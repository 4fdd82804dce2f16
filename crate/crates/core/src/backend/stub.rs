//! In-process HTTP stub implementing the completion and scoring endpoints.
//!
//! Integration tests point the HTTP provider at this server to exercise
//! chunking, retry, auth propagation, and malformed-response handling
//! without a network. The stub is deliberately tiny: one accept loop, one
//! connection at a time, scripted behavior under a mutex.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

/// What the stub should serve. Failure statuses are consumed one per
/// incoming request before any successful handling; the replay queue, when
/// present, overrides the fixed completion template.
#[derive(Debug, Clone, Default)]
pub struct StubBehavior {
    /// Token (text, logprob) template used for every completion.
    pub completion_tokens: Vec<(String, f64)>,
    /// HTTP statuses to emit first, one per request (e.g. [429, 429]).
    pub fail_statuses: VecDeque<u16>,
    /// Serve completions without a logprobs payload.
    pub omit_logprobs: bool,
    /// Exact completions to serve in order; each request for n completions
    /// pops n entries.
    pub replay: Option<VecDeque<Vec<(String, f64)>>>,
    /// Scores served from the scoring endpoint.
    pub score_response: Option<Vec<f64>>,
}

/// One logged request, enough to assert chunk sizes and auth headers.
#[derive(Debug, Clone)]
pub struct StubRequest {
    pub path: String,
    pub prompt: String,
    pub n: usize,
    pub authorization: Option<String>,
}

struct StubState {
    behavior: Mutex<StubBehavior>,
    requests: Mutex<Vec<StubRequest>>,
    completions_served: AtomicU64,
    tokens_served: AtomicU64,
}

/// A scripted HTTP server bound to a loopback port.
pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    state: Arc<StubState>,
}

impl StubServer {
    pub fn start(behavior: StubBehavior) -> std::io::Result<StubServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let state = Arc::new(StubState {
            behavior: Mutex::new(behavior),
            requests: Mutex::new(Vec::new()),
            completions_served: AtomicU64::new(0),
            tokens_served: AtomicU64::new(0),
        });

        let loop_shutdown = Arc::clone(&shutdown);
        let loop_state = Arc::clone(&state);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if loop_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    // A broken connection only fails its own request.
                    let _ = handle_connection(stream, &loop_state);
                }
            }
        });

        Ok(StubServer {
            addr,
            shutdown,
            handle: Some(handle),
            state,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.state.requests.lock().expect("stub lock").clone()
    }

    /// Completions returned with status 200, for ledger reconciliation.
    pub fn completions_served(&self) -> u64 {
        self.state.completions_served.load(Ordering::Relaxed)
    }

    /// Tokens returned with status 200, for ledger reconciliation.
    pub fn tokens_served(&self) -> u64 {
        self.state.tokens_served.load(Ordering::Relaxed)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(mut stream: TcpStream, state: &StubState) -> std::io::Result<()> {
    let (path, headers, body) = read_request(&mut stream)?;

    let parsed: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);
    let prompt = parsed
        .get("prompt")
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    let n = parsed.get("n").and_then(|v| v.as_u64()).unwrap_or(1) as usize;
    let authorization = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("authorization"))
        .map(|(_, v)| v.clone());

    state.requests.lock().expect("stub lock").push(StubRequest {
        path: path.clone(),
        prompt,
        n,
        authorization,
    });

    let scripted_failure = {
        let mut behavior = state.behavior.lock().expect("stub lock");
        behavior.fail_statuses.pop_front()
    };
    if let Some(status) = scripted_failure {
        let body = r#"{"error":{"message":"scripted failure"}}"#;
        return write_response(&mut stream, status, body);
    }

    match path.as_str() {
        "/v1/completions" => {
            let (payload, completions, tokens) = {
                let mut behavior = state.behavior.lock().expect("stub lock");
                build_completions(&mut behavior, n)
            };
            match payload {
                Some(json) => {
                    state
                        .completions_served
                        .fetch_add(completions, Ordering::Relaxed);
                    state.tokens_served.fetch_add(tokens, Ordering::Relaxed);
                    write_response(&mut stream, 200, &json)
                }
                None => write_response(
                    &mut stream,
                    500,
                    r#"{"error":{"message":"replay queue exhausted"}}"#,
                ),
            }
        }
        "/v1/score" => {
            let scores = state.behavior.lock().expect("stub lock").score_response.clone();
            match scores {
                Some(scores) => {
                    let json = serde_json::json!({ "scores": scores }).to_string();
                    write_response(&mut stream, 200, &json)
                }
                None => write_response(&mut stream, 404, r#"{"error":{"message":"no scorer"}}"#),
            }
        }
        _ => write_response(&mut stream, 404, r#"{"error":{"message":"unknown path"}}"#),
    }
}

/// Builds the JSON payload for `n` completions, returning the payload plus
/// the completion and token counts it contains.
fn build_completions(behavior: &mut StubBehavior, n: usize) -> (Option<String>, u64, u64) {
    let mut completion_tokens: Vec<Vec<(String, f64)>> = Vec::with_capacity(n);
    match behavior.replay.as_mut() {
        Some(queue) => {
            for _ in 0..n {
                match queue.pop_front() {
                    Some(tokens) => completion_tokens.push(tokens),
                    None => return (None, 0, 0),
                }
            }
        }
        None => {
            for _ in 0..n {
                completion_tokens.push(behavior.completion_tokens.clone());
            }
        }
    }

    let mut total_tokens = 0u64;
    let choices: Vec<serde_json::Value> = completion_tokens
        .iter()
        .enumerate()
        .map(|(index, tokens)| {
            total_tokens += tokens.len() as u64;
            let text: String = tokens.iter().map(|(t, _)| t.as_str()).collect();
            let logprobs = if behavior.omit_logprobs {
                serde_json::Value::Null
            } else {
                serde_json::json!({
                    "tokens": tokens.iter().map(|(t, _)| t.clone()).collect::<Vec<_>>(),
                    "token_logprobs": tokens.iter().map(|(_, l)| *l).collect::<Vec<_>>(),
                })
            };
            serde_json::json!({
                "index": index,
                "text": text,
                "logprobs": logprobs,
                "finish_reason": "stop",
            })
        })
        .collect();

    let payload = serde_json::json!({
        "id": "cmpl-stub",
        "object": "text_completion",
        "choices": choices,
        "usage": {
            "prompt_tokens": 0,
            "completion_tokens": total_tokens,
            "total_tokens": total_tokens,
        },
    });
    (Some(payload.to_string()), n as u64, total_tokens)
}

fn read_request(stream: &mut TcpStream) -> std::io::Result<(String, Vec<(String, String)>, Vec<u8>)> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 1024];
    let header_end;
    loop {
        let read = stream.read(&mut chunk)?;
        if read == 0 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "connection closed before headers",
            ));
        }
        buf.extend_from_slice(&chunk[..read]);
        if let Some(pos) = find_header_end(&buf) {
            header_end = pos;
            break;
        }
        if buf.len() > 1 << 20 {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "headers too large",
            ));
        }
    }

    let head = String::from_utf8_lossy(&buf[..header_end]).to_string();
    let mut lines = head.split("\r\n");
    let request_line = lines.next().unwrap_or("");
    let path = request_line.split(' ').nth(1).unwrap_or("/").to_string();
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| {
            l.split_once(':')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        })
        .collect();

    let content_length = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);

    let mut body = buf[header_end + 4..].to_vec();
    while body.len() < content_length {
        let read = stream.read(&mut chunk)?;
        if read == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..read]);
    }
    body.truncate(content_length);

    Ok((path, headers, body))
}

fn find_header_end(buf: &[u8]) -> Option<usize> {
    buf.windows(4).position(|w| w == b"\r\n\r\n")
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let response = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    stream.write_all(response.as_bytes())?;
    stream.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serves_scripted_completions_and_logs_requests() {
        let server = StubServer::start(StubBehavior {
            completion_tokens: vec![("hi ".into(), -0.5), ("there".into(), -1.0)],
            ..StubBehavior::default()
        })
        .unwrap();

        let client = reqwest::blocking::Client::new();
        let resp: serde_json::Value = client
            .post(format!("{}/v1/completions", server.url()))
            .json(&serde_json::json!({"prompt": "p", "n": 2, "model": "m"}))
            .send()
            .unwrap()
            .json()
            .unwrap();

        assert_eq!(resp["choices"].as_array().unwrap().len(), 2);
        assert_eq!(resp["choices"][0]["text"], "hi there");
        assert_eq!(resp["choices"][0]["logprobs"]["token_logprobs"][1], -1.0);
        assert_eq!(server.completions_served(), 2);
        assert_eq!(server.tokens_served(), 4);
        let requests = server.requests();
        assert_eq!(requests.len(), 1);
        assert_eq!(requests[0].n, 2);
        assert_eq!(requests[0].prompt, "p");
    }

    #[test]
    fn scripted_statuses_come_first() {
        let server = StubServer::start(StubBehavior {
            completion_tokens: vec![("x".into(), -1.0)],
            fail_statuses: VecDeque::from([429, 503]),
            ..StubBehavior::default()
        })
        .unwrap();

        let client = reqwest::blocking::Client::new();
        let url = format!("{}/v1/completions", server.url());
        let body = serde_json::json!({"prompt": "p", "n": 1});
        assert_eq!(client.post(&url).json(&body).send().unwrap().status(), 429);
        assert_eq!(client.post(&url).json(&body).send().unwrap().status(), 503);
        assert_eq!(client.post(&url).json(&body).send().unwrap().status(), 200);
        assert_eq!(server.completions_served(), 1, "failures serve nothing");
    }

    #[test]
    fn score_endpoint_returns_configured_scores() {
        let server = StubServer::start(StubBehavior {
            score_response: Some(vec![0.9, 0.1]),
            ..StubBehavior::default()
        })
        .unwrap();
        let client = reqwest::blocking::Client::new();
        let resp: serde_json::Value = client
            .post(format!("{}/v1/score", server.url()))
            .json(&serde_json::json!({"question_id": "q", "statement": "s", "steps": ["a", "b"]}))
            .send()
            .unwrap()
            .json()
            .unwrap();
        assert_eq!(resp["scores"][0], 0.9);
        assert_eq!(resp["scores"][1], 0.1);
    }
}
