//! Generation backends and the batched client.

use std::collections::HashMap;
use std::io::Read;
use std::time::Duration;

use medforge_core::{Task, TaskSample};
use serde::{Deserialize, Serialize};

/// What went wrong with one request, before the batch index is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Failure {
    Transport(String),
    Status { status: u16, body: String },
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend {backend} unreachable (batch {batch}): {message}")]
    Transport {
        backend: String,
        batch: usize,
        message: String,
    },
    #[error("backend {backend} answered HTTP {status} (batch {batch}): {body}")]
    Status {
        backend: String,
        batch: usize,
        status: u16,
        body: String,
    },
    #[error("backend {backend} sent a malformed response (batch {batch}): {message}")]
    Malformed {
        backend: String,
        batch: usize,
        message: String,
    },
    #[error("backend {backend} is not healthy: {message}")]
    Unhealthy { backend: String, message: String },
}

impl BackendError {
    fn new(backend: String, batch: usize, failure: Failure) -> Self {
        match failure {
            Failure::Transport(message) => BackendError::Transport { backend, batch, message },
            Failure::Status { status, body } => BackendError::Status {
                backend,
                batch,
                status,
                body,
            },
            Failure::Malformed(message) => BackendError::Malformed { backend, batch, message },
        }
    }

    pub fn batch(&self) -> Option<usize> {
        match self {
            BackendError::Transport { batch, .. }
            | BackendError::Status { batch, .. }
            | BackendError::Malformed { batch, .. } => Some(*batch),
            BackendError::Unhealthy { .. } => None,
        }
    }
}

/// Anything that maps a batch of task inputs to one output each.
pub trait Backend: Send + Sync {
    /// Name used in error messages (the URL for HTTP backends).
    fn name(&self) -> String;

    fn generate_batch(&self, task: Task, inputs: &[String], max_new_tokens: usize) -> Result<Vec<String>, Failure>;

    fn health(&self) -> Result<Health, BackendError> {
        Ok(Health {
            status: "ok".to_string(),
            model: self.name(),
        })
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn name(&self) -> String {
        (**self).name()
    }

    fn generate_batch(&self, task: Task, inputs: &[String], max_new_tokens: usize) -> Result<Vec<String>, Failure> {
        (**self).generate_batch(task, inputs, max_new_tokens)
    }

    fn health(&self) -> Result<Health, BackendError> {
        (**self).health()
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn generate_batch(&self, task: Task, inputs: &[String], max_new_tokens: usize) -> Result<Vec<String>, Failure> {
        (**self).generate_batch(task, inputs, max_new_tokens)
    }

    fn health(&self) -> Result<Health, BackendError> {
        (**self).health()
    }
}

/// Returns every input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoBackend;

impl Backend for EchoBackend {
    fn name(&self) -> String {
        "echo".to_string()
    }

    fn generate_batch(&self, _task: Task, inputs: &[String], _max_new_tokens: usize) -> Result<Vec<String>, Failure> {
        Ok(inputs.to_vec())
    }
}

/// Answers with the gold target of the sample whose (task, input) matches,
/// or an empty string.
#[derive(Debug, Clone, Default)]
pub struct GoldReplayBackend {
    targets: HashMap<(Task, String), String>,
    conflicts: usize,
}

impl GoldReplayBackend {
    pub fn new<'a>(samples: impl IntoIterator<Item = &'a TaskSample>) -> Self {
        let mut targets = HashMap::new();
        let mut conflicts = 0;
        for s in samples {
            let previous = targets.insert((s.task, s.input_seq.clone()), s.target_seq.clone());
            if previous.is_some_and(|p| p != s.target_seq) {
                conflicts += 1;
            }
        }
        GoldReplayBackend { targets, conflicts }
    }

    /// Samples whose input was already seen with a different target. The
    /// later sample wins the lookup.
    pub fn conflicts(&self) -> usize {
        self.conflicts
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn lookup(&self, task: Task, input: &str) -> Option<&str> {
        self.targets.get(&(task, input.to_string())).map(String::as_str)
    }
}

impl Backend for GoldReplayBackend {
    fn name(&self) -> String {
        "gold-replay".to_string()
    }

    fn generate_batch(&self, task: Task, inputs: &[String], _max_new_tokens: usize) -> Result<Vec<String>, Failure> {
        Ok(inputs
            .iter()
            .map(|i| self.lookup(task, i).unwrap_or_default().to_string())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub task: Task,
    pub inputs: Vec<String>,
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
}

/// Client for `POST {url}/v1/generate` and `GET {url}/v1/health`.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    url: String,
    agent: ureq::Agent,
    /// Extra attempts after a transport failure. Status and parse errors
    /// are never retried.
    max_retries: usize,
}

impl HttpBackend {
    pub fn new(url: &str, timeout: Duration, max_retries: usize) -> Self {
        HttpBackend {
            url: url.trim_end_matches('/').to_string(),
            agent: http_agent(timeout),
            max_retries,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn post_once(&self, body: &str) -> Result<Vec<String>, Failure> {
        let endpoint = format!("{}/v1/generate", self.url);
        let text = post_json(&self.agent, &endpoint, body)?;
        let resp: GenerateResponse =
            serde_json::from_str(&text).map_err(|e| Failure::Malformed(e.to_string()))?;
        Ok(resp.outputs)
    }
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs a JSON body and returns the body of a 200 response.
pub(crate) fn post_json(agent: &ureq::Agent, endpoint: &str, body: &str) -> Result<String, Failure> {
    let resp = agent
        .post(endpoint)
        .header("content-type", "application/json")
        .send(body)
        .map_err(|e| Failure::Transport(format!("{}: {}", endpoint, e)))?;
    read_body(resp)
}

fn read_body(mut resp: ureq::http::Response<ureq::Body>) -> Result<String, Failure> {
    let status = resp.status().as_u16();
    let mut text = String::new();
    resp.body_mut()
        .as_reader()
        .read_to_string(&mut text)
        .map_err(|e| Failure::Transport(e.to_string()))?;
    if status != 200 {
        return Err(Failure::Status { status, body: text });
    }
    Ok(text)
}

impl Backend for HttpBackend {
    fn name(&self) -> String {
        self.url.clone()
    }

    fn generate_batch(&self, task: Task, inputs: &[String], max_new_tokens: usize) -> Result<Vec<String>, Failure> {
        let body = serde_json::to_string(&GenerateRequest {
            task,
            inputs: inputs.to_vec(),
            max_new_tokens,
        })
        .map_err(|e| Failure::Malformed(e.to_string()))?;
        let mut attempt = 0;
        loop {
            match self.post_once(&body) {
                Err(Failure::Transport(_)) if attempt < self.max_retries => attempt += 1,
                other => return other,
            }
        }
    }

    fn health(&self) -> Result<Health, BackendError> {
        let unhealthy = |message: String| BackendError::Unhealthy {
            backend: self.url.clone(),
            message,
        };
        let endpoint = format!("{}/v1/health", self.url);
        let resp = self
            .agent
            .get(&endpoint)
            .call()
            .map_err(|e| unhealthy(format!("{}: {}", endpoint, e)))?;
        let text = read_body(resp).map_err(|f| unhealthy(format!("{:?}", f)))?;
        let health: Health = serde_json::from_str(&text).map_err(|e| unhealthy(e.to_string()))?;
        if health.status != "ok" {
            return Err(unhealthy(format!("status \"{}\"", health.status)));
        }
        Ok(health)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Batching {
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_new_tokens: usize,
}

impl Default for Batching {
    fn default() -> Self {
        Batching {
            batch_size: 16,
            max_in_flight: 2,
            max_new_tokens: 128,
        }
    }
}

/// Generates one output per input, in input order.
///
/// Inputs are cut into batches of `batch_size`; at most `max_in_flight`
/// batches are outstanding at a time. The first failing batch (by index)
/// aborts the call.
pub fn generate<B: Backend + ?Sized>(
    backend: &B,
    task: Task,
    inputs: &[String],
    batching: &Batching,
) -> Result<Vec<String>, BackendError> {
    let batch_size = batching.batch_size.max(1);
    let in_flight = batching.max_in_flight.max(1);
    let batches: Vec<&[String]> = inputs.chunks(batch_size).collect();
    let mut outputs = Vec::with_capacity(inputs.len());
    for (wave_no, wave) in batches.chunks(in_flight).enumerate() {
        let first = wave_no * in_flight;
        let results: Vec<Result<Vec<String>, Failure>> = if wave.len() == 1 {
            vec![backend.generate_batch(task, wave[0], batching.max_new_tokens)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|b| s.spawn(move || backend.generate_batch(task, b, batching.max_new_tokens)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Failure::Transport("worker panicked".to_string()))))
                    .collect()
            })
        };
        for (offset, (batch, result)) in wave.iter().zip(results).enumerate() {
            let index = first + offset;
            let out = result.map_err(|f| BackendError::new(backend.name(), index, f))?;
            if out.len() != batch.len() {
                return Err(BackendError::Malformed {
                    backend: backend.name(),
                    batch: index,
                    message: format!("{} outputs for {} inputs", out.len(), batch.len()),
                });
            }
            outputs.extend(out);
        }
    }
    Ok(outputs)
}
