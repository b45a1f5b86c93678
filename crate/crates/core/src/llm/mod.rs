//! Text-completion gateway.
//!
//! A [`Gateway`] wraps a [`CompletionProvider`] (the HTTP client or the
//! deterministic mock) with request validation, a content-addressed response
//! cache, bounded retry with exponential backoff, optional request spacing
//! and a token cost ledger.

mod cache;
mod cost;
mod http;
mod longform;
mod mock;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::{Clock, SystemClock};
use crate::prompting::{PromptError, RenderedPrompt};

pub use cache::ResponseCache;
pub use cost::{estimate_cost, CostError, CostLedger, Usd};
pub use http::{HttpProvider, HttpProviderConfig};
pub use longform::{LongFormPolicy, LongFormResult, LongFormStop};
pub use mock::{MockConfig, MockProvider};

/// Temperatures accepted by completion providers.
pub const TEMPERATURE_RANGE: std::ops::RangeInclusive<f64> = 0.0..=2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: RenderedPrompt,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
    pub replicate_index: u32,
}

impl GenerationRequest {
    /// Default completion budget; covers passages of roughly 900 words.
    pub const DEFAULT_MAX_TOKENS: u32 = 1200;

    pub fn new(prompt: RenderedPrompt, temperature: f64, model_id: impl Into<String>) -> Self {
        GenerationRequest {
            prompt,
            temperature,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            model_id: model_id.into(),
            replicate_index: 0,
        }
    }

    pub fn with_replicate(mut self, index: u32) -> Self {
        self.replicate_index = index;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !self.temperature.is_finite() || !TEMPERATURE_RANGE.contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!("temperature {} is outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model_id is empty".into()));
        }
        if self.prompt.text.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt text is empty".into()));
        }
        Ok(())
    }

    /// Cache key over (prompt digest, temperature, model, replicate).
    pub fn request_key(&self) -> String {
        format!(
            "prompt={};template={};t={};model={};rep={}",
            self.prompt.spec_digest,
            self.prompt.template_version,
            self.temperature,
            self.model_id,
            self.replicate_index
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

impl FinishReason {
    pub fn from_wire(s: Option<&str>) -> Self {
        match s {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub finish_reason: FinishReason,
    pub request_key: String,
    pub received_at: DateTime<Utc>,
}

impl GenerationResult {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// What a provider receives for one completion call.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderCall<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub prompt_digest: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub replicate_index: u32,
}

/// JSON body sent to a completion endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub n: u32,
}

impl From<&ProviderCall<'_>> for WireRequest {
    fn from(c: &ProviderCall<'_>) -> Self {
        WireRequest {
            model: c.model.to_owned(),
            prompt: c.prompt.to_owned(),
            temperature: c.temperature,
            max_tokens: c.max_tokens,
            n: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429): {body}")]
    RateLimited { retry_after: Option<Duration>, body: String },
    #[error("server error (HTTP {status}): {body}")]
    Server { status: u16, body: String },
    #[error("request rejected (HTTP {status}): {body}")]
    Client { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited { .. } | ProviderError::Server { .. })
    }
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, ProviderError>;

    /// Requests that actually left the process.
    fn network_calls(&self) -> u64 {
        0
    }

    fn describe(&self) -> String;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Provider(ProviderError),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: ProviderError },
    #[error("rate limit still in effect after {attempts} attempts: {last}")]
    RateLimitExhausted { attempts: u32, last: ProviderError },
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(
        "long-form generation stopped after {calls} calls with {words} of {target} target words; partial text kept"
    )]
    LongFormIncomplete { partial: String, words: usize, target: usize, calls: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    #[serde(with = "millis")]
    pub base_delay: Duration,
    #[serde(with = "millis")]
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(30) }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        RetryPolicy { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    /// Delay before attempt `attempt + 1`, doubling from `base_delay`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub retry: RetryPolicy,
    /// Upper bound on concurrent requests issued by batch runs.
    pub in_flight_limit: usize,
    /// Minimum spacing between request starts.
    pub min_interval: Option<Duration>,
    pub unit_price_per_1000: Usd,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            retry: RetryPolicy::default(),
            in_flight_limit: 4,
            min_interval: None,
            unit_price_per_1000: Usd::from_cents(2),
        }
    }
}

pub struct Gateway {
    provider: Arc<dyn CompletionProvider>,
    cache: Option<ResponseCache>,
    config: GatewayConfig,
    ledger: Mutex<CostLedger>,
    clock: Arc<dyn Clock>,
    last_start: Mutex<Option<Instant>>,
    attempts: AtomicU64,
    cache_hits: AtomicU64,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.describe())
            .field("cache", &self.cache)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn CompletionProvider>, config: GatewayConfig) -> Self {
        Gateway {
            ledger: Mutex::new(CostLedger::new(config.unit_price_per_1000)),
            provider,
            cache: None,
            config,
            clock: Arc::new(SystemClock),
            last_start: Mutex::new(None),
            attempts: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Requests sent over the network by the underlying provider.
    pub fn network_calls(&self) -> u64 {
        self.provider.network_calls()
    }

    /// Provider invocations, including failed attempts.
    pub fn provider_attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn complete(&self, req: &GenerationRequest) -> Result<GenerationResult, GatewayError> {
        req.validate()?;
        let key = req.request_key();
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(hit);
            }
        }

        let call = ProviderCall {
            model: &req.model_id,
            prompt: &req.prompt.text,
            prompt_digest: &req.prompt.spec_digest,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            replicate_index: req.replicate_index,
        };
        let reply = self.call_with_retry(&call)?;
        if reply.text.is_empty() && reply.finish_reason != FinishReason::Other {
            return Err(GatewayError::Provider(ProviderError::Malformed(
                "empty completion with a normal finish reason".into(),
            )));
        }
        let result = GenerationResult {
            text: reply.text,
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            finish_reason: reply.finish_reason,
            request_key: key,
            received_at: self.clock.now(),
        };
        self.ledger.lock().unwrap_or_else(|e| e.into_inner()).record(result.total_tokens());
        if let Some(cache) = &self.cache {
            cache.put(&result)?;
        }
        Ok(result)
    }

    fn call_with_retry(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, GatewayError> {
        let max = self.config.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.pace();
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let err = match self.provider.complete(call) {
                Ok(reply) => return Ok(reply),
                Err(e) => e,
            };
            if !err.is_retryable() {
                return Err(GatewayError::Provider(err));
            }
            if attempt >= max {
                return Err(match err {
                    ProviderError::RateLimited { .. } => {
                        GatewayError::RateLimitExhausted { attempts: attempt, last: err }
                    }
                    _ => GatewayError::RetriesExhausted { attempts: attempt, last: err },
                });
            }
            let mut delay = self.config.retry.backoff(attempt);
            if let ProviderError::RateLimited { retry_after: Some(after), .. } = &err {
                delay = delay.max((*after).min(self.config.retry.max_delay));
            }
            log::warn!("completion attempt {attempt}/{max} failed ({err}); retrying in {delay:?}");
            if !delay.is_zero() {
                thread::sleep(delay);
            }
        }
    }

    fn pace(&self) {
        let Some(interval) = self.config.min_interval else {
            return;
        };
        let mut last = self.last_start.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < interval {
                thread::sleep(interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}
