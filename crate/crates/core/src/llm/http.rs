use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, FinishReason, ProviderCall, ProviderError, ProviderReply, WireRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    /// Full URL of the completions endpoint.
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

/// Client for a JSON text-completion endpoint.
///
/// Sends `{model, prompt, temperature, max_tokens, n}` and reads
/// `choices[0].text`, `choices[0].finish_reason` and `usage`.
#[derive(Debug)]
pub struct HttpProvider {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    #[serde(default)]
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl HttpProvider {
    /// Reads the API key from the configured environment variable; a missing
    /// key is allowed (local endpoints often need none).
    pub fn from_config(config: &HttpProviderConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(&config.endpoint, api_key, Duration::from_secs(config.timeout_secs))
    }

    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        HttpProvider { endpoint: endpoint.to_owned(), api_key, agent, calls: AtomicU64::new(0) }
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, call: &ProviderCall<'_>) -> Result<ProviderReply, ProviderError> {
        let body =
            serde_json::to_string(&WireRequest::from(call)).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut resp = req.send(body).map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.body_mut().read_to_string().map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 => return Err(ProviderError::RateLimited { retry_after, body: text }),
            500..=599 => return Err(ProviderError::Server { status, body: text }),
            _ => return Err(ProviderError::Client { status, body: text }),
        }
        let parsed: WireResponse =
            serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(format!("{e}: {text}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))?;
        let usage = parsed.usage.unwrap_or(WireUsage { prompt_tokens: 0, completion_tokens: 0 });
        Ok(ProviderReply {
            text: choice.text,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            finish_reason: FinishReason::from_wire(choice.finish_reason.as_deref()),
        })
    }

    fn network_calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn describe(&self) -> String {
        format!("http({})", self.endpoint)
    }
}
