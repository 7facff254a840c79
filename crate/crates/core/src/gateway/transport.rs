//! HTTP transports. Everything that leaves the process goes through a
//! [`Transport`], which is what lets tests count outbound connections.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
    pub timeout: Duration,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            headers: Vec::new(),
            body: None,
            timeout,
        }
    }

    pub fn post_json(url: impl Into<String>, body: String, timeout: Duration) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            headers: vec![("content-type".into(), "application/json".into())],
            body: Some(body),
            timeout,
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Io(String),
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTP/1.1 transport.
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport {
    pub fn new() -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { agent }
    }
}

fn map_ureq(err: ureq::Error) -> TransportError {
    match err {
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        other => TransportError::Io(other.to_string()),
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let response = match request.method {
            Method::Get => {
                let mut req = self
                    .agent
                    .get(&request.url)
                    .config()
                    .timeout_global(Some(request.timeout))
                    .build();
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.call()
            }
            Method::Post => {
                let mut req = self
                    .agent
                    .post(&request.url)
                    .config()
                    .timeout_global(Some(request.timeout))
                    .build();
                for (k, v) in &request.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.send(request.body.as_deref().unwrap_or(""))
            }
        }
        .map_err(map_ureq)?;
        let status = response.status().as_u16();
        let body = response
            .into_body()
            .read_to_string()
            .map_err(map_ureq)?;
        Ok(HttpResponse { status, body })
    }
}

/// Wraps a transport and records the URL of every request it sees.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    log: Mutex<Vec<String>>,
}

impl RecordingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn connections(&self) -> Vec<String> {
        self.log.lock().unwrap().clone()
    }

    pub fn connection_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl Transport for RecordingTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.log.lock().unwrap().push(request.url.clone());
        self.inner.send(request)
    }
}

/// A transport that refuses everything. Useful as the inner transport for
/// workloads that must never touch the network.
pub struct NullTransport;

impl Transport for NullTransport {
    fn send(&self, _request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        Err(TransportError::Io("network disabled".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_hash: String,
    pub completion: String,
}

/// Mock-backend transcript: an ordered list of `request hash → completion`.
/// Repeated hashes are served in order; the last one repeats once exhausted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub delay_ms: u64,
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn push(&mut self, request_hash: impl Into<String>, completion: impl Into<String>) {
        self.entries.push(TranscriptEntry {
            request_hash: request_hash.into(),
            completion: completion.into(),
        });
    }
}

/// Serves chat completions from a [`Transcript`], speaking the same wire
/// format as a real chat-completion endpoint.
pub struct TranscriptTransport {
    delay: Duration,
    queues: Mutex<HashMap<String, (VecDeque<String>, String)>>,
    calls: AtomicUsize,
}

impl TranscriptTransport {
    pub fn new(transcript: Transcript) -> Self {
        let mut queues: HashMap<String, (VecDeque<String>, String)> = HashMap::new();
        for e in transcript.entries {
            let slot = queues
                .entry(e.request_hash)
                .or_insert_with(|| (VecDeque::new(), String::new()));
            slot.1 = e.completion.clone();
            slot.0.push_back(e.completion);
        }
        Self {
            delay: Duration::from_millis(transcript.delay_ms),
            queues: Mutex::new(queues),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for TranscriptTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let Some(body) = request.body.as_deref() else {
            return Ok(HttpResponse {
                status: 405,
                body: "transcript transport only serves chat completions".into(),
            });
        };
        let hash = match super::hash_chat_body(body) {
            Some(h) => h,
            None => {
                return Ok(HttpResponse {
                    status: 400,
                    body: "not a chat-completion body".into(),
                })
            }
        };
        let completion = {
            let mut queues = self.queues.lock().unwrap();
            match queues.get_mut(&hash) {
                Some((queue, last)) => queue.pop_front().unwrap_or_else(|| last.clone()),
                None => {
                    return Ok(HttpResponse {
                        status: 404,
                        body: format!("no transcript entry for request {hash}"),
                    })
                }
            }
        };
        Ok(HttpResponse {
            status: 200,
            body: super::completion_response_body("transcript", &completion),
        })
    }
}

/// Adapts a closure into a transport; handy for stubs.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&HttpRequest) -> Result<HttpResponse, TransportError> + Send + Sync,
{
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (self.0)(request)
    }
}
