//! Uniform completion interface over three backends: remote HTTP chat
//! providers, a content-addressed replay cache, and a deterministic
//! simulated solver.
//!
//! Caching is transparent: for any request the returned text is identical
//! with and without the cache, only `billed_call` differs. Cache hits are
//! never billed.

mod cache;
mod remote;
mod scripted;
mod simulator;

pub use cache::ReplayCache;
pub use remote::{RemoteBackend, RemoteConfig};
pub use scripted::ScriptedBackend;
pub use simulator::{
    derived_ground_truth, markers, simulate_solution, simulate_solution_forced, CorruptionMode,
    ErrorClass, FeedbackMode, ForcedOutcome, SimulatedSolver, SimulatorProfile,
};

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_fields;

/// Errors from the completion gateway.
#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("backend unavailable after {attempts} attempts: {last_error}")]
    BackendUnavailable { attempts: u32, last_error: String },
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("invalid simulator profile: {0}")]
    InvalidProfile(String),
}

/// Which layer produced a completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Cache,
    Simulated,
}

/// A fully specified completion request. All fields participate in the
/// cache key; two requests with equal fields are interchangeable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    /// Sampling temperature in [0, 2]. Defaults to 0.2.
    pub temperature: f64,
    /// Index within a multi-sample batch.
    pub sample_index: u32,
    /// Seed for deterministic backends.
    pub seed: u64,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            system_prompt: String::new(),
            user_prompt: user_prompt.into(),
            temperature: 0.2,
            sample_index: 0,
            seed: 0,
        }
    }

    pub fn with_system(mut self, system_prompt: impl Into<String>) -> Self {
        self.system_prompt = system_prompt.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_sample_index(mut self, sample_index: u32) -> Self {
        self.sample_index = sample_index;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.user_prompt.trim().is_empty() {
            return Err(GatewayError::MalformedRequest("empty prompt".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::MalformedRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// A completion plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend: BackendKind,
    pub latency_ms: u64,
    /// True iff the completion was produced by a remote or simulated
    /// backend invocation; cache hits never count toward #Call.
    pub billed_call: bool,
}

/// Stable content hash over every request field. Changing any field changes
/// the key; the float temperature is hashed by its bit pattern.
pub fn cache_key(req: &CompletionRequest) -> String {
    sha256_fields(&[
        req.model_id.as_bytes(),
        req.system_prompt.as_bytes(),
        req.user_prompt.as_bytes(),
        &req.temperature.to_bits().to_le_bytes(),
        &req.sample_index.to_le_bytes(),
        &req.seed.to_le_bytes(),
    ])
}

/// A completion producer behind the gateway.
pub trait CompletionBackend: Send + Sync {
    fn invoke(&self, req: &CompletionRequest) -> Result<String, GatewayError>;
    fn kind(&self) -> BackendKind;
}

/// Retry schedule for backend invocations.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoffs: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        // Three attempts with 1s then 4s waits keeps harness runs bounded.
        Self {
            attempts: 3,
            backoffs: vec![Duration::from_secs(1), Duration::from_secs(4)],
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; for tests.
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            backoffs: Vec::new(),
        }
    }
}

/// Backend plus optional replay cache plus retry policy.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    cache: Option<Arc<ReplayCache>>,
    retry: RetryPolicy,
}

impl Gateway {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ReplayCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Issue one completion. Cache hits return the stored text unbilled;
    /// misses invoke the backend with bounded retries and store the result.
    pub fn complete(&self, req: &CompletionRequest) -> Result<Completion, GatewayError> {
        req.validate()?;
        let key = cache_key(req);
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.get(&key) {
                return Ok(Completion {
                    text,
                    backend: BackendKind::Cache,
                    latency_ms: 0,
                    billed_call: false,
                });
            }
        }
        let started = Instant::now();
        let mut last_error = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                if let Some(wait) = self.retry.backoffs.get(attempt as usize - 1) {
                    std::thread::sleep(*wait);
                }
            }
            match self.backend.invoke(req) {
                Ok(text) => {
                    if let Some(cache) = &self.cache {
                        cache.put(&key, req, &text);
                    }
                    return Ok(Completion {
                        text,
                        backend: self.backend.kind(),
                        latency_ms: started.elapsed().as_millis() as u64,
                        billed_call: true,
                    });
                }
                Err(GatewayError::MalformedRequest(m)) => {
                    return Err(GatewayError::MalformedRequest(m))
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(GatewayError::BackendUnavailable {
            attempts: self.retry.attempts,
            last_error,
        })
    }

    /// Issue `n` completions with sample_index 0..n-1, ordered by index.
    /// Any failure aborts the whole batch.
    pub fn sample_n(
        &self,
        req: &CompletionRequest,
        n: u32,
    ) -> Result<Vec<Completion>, GatewayError> {
        if n == 0 {
            return Err(GatewayError::MalformedRequest("n must be >= 1".into()));
        }
        (0..n)
            .map(|i| self.complete(&req.clone().with_sample_index(i)))
            .collect()
    }
}
