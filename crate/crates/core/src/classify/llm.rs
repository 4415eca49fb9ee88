//! Remote chat-completion classifier.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::class::{ClassificationResult, ClassificationSource, Confidence, MemoryClass};
use crate::firmware::tree::sha256_hex;

pub const API_KEY_ENV: &str = "FIRMSCAN_CLASSIFIER_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("bad classifier response: {0}")]
    BadResponse(String),
    #[error("classifier returned unknown label {0:?}")]
    UnknownLabel(String),
    #[error("classifier rate limit exceeded")]
    RateLimited,
    #[error("classifier not configured: {0}")]
    NotConfigured(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        matches!(self, LlmError::Transport(_) | LlmError::RateLimited)
    }
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: String,
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles per further attempt.
    pub backoff_base: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Sustained request rate; bursts up to `max_in_flight` are allowed.
    pub requests_per_second: f64,
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: impl Into<String>) -> Self {
        LlmConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: api_key.into(),
            max_attempts: 3,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            requests_per_second: 5.0,
        }
    }

    /// Reads the credential from `FIRMSCAN_CLASSIFIER_API_KEY`.
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| LlmError::NotConfigured(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(endpoint, model, key))
    }
}

pub fn prompt(description: &str) -> String {
    format!(
        "Classify the following vulnerability as \"not-memory-related\", \"spatial-memory-related\", \
         \"temporal-memory-related\", or \"other-memory-related\". Respond with a JSON object with keys \
         \"classification\" and \"reasoning\".\n\nDescription: {description}"
    )
}

struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

struct TokenBucket {
    state: Mutex<(f64, Instant)>,
    rate: f64,
    capacity: f64,
}

impl TokenBucket {
    fn take(&self) {
        if !self.rate.is_finite() || self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut st = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                st.0 = (st.0 + now.duration_since(st.1).as_secs_f64() * self.rate).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - st.0) / self.rate)
            };
            thread::sleep(wait);
        }
    }
}

/// Blocking client with retry, response cache, in-flight bound and rate limit.
pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    cache: Mutex<HashMap<String, ClassificationResult>>,
    attempts: AtomicU64,
    slots: Slots,
    bucket: TokenBucket,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("endpoint", &self.config.endpoint).field("model", &self.config.model).finish()
    }
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = config.max_in_flight.max(1);
        LlmClient {
            slots: Slots { free: Mutex::new(in_flight), cv: Condvar::new() },
            bucket: TokenBucket {
                state: Mutex::new((in_flight as f64, Instant::now())),
                rate: config.requests_per_second,
                capacity: in_flight as f64,
            },
            config,
            agent,
            cache: Mutex::new(HashMap::new()),
            attempts: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// HTTP requests sent so far, retries included.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    pub fn classify(&self, description: &str) -> Result<ClassificationResult, LlmError> {
        if description.trim().is_empty() {
            return Err(LlmError::BadResponse("empty description".into()));
        }
        let key = sha256_hex(description.as_bytes());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..self.config.max_attempts.max(1) {
            if attempt > 0 {
                thread::sleep(self.config.backoff_base * 2u32.saturating_pow(attempt - 1));
            }
            match self.request_once(description) {
                Ok(result) => {
                    self.cache.lock().expect("cache lock").insert(key, result.clone());
                    return Ok(result);
                }
                Err(e) if e.retryable() => {
                    log::debug!("classifier attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn request_once(&self, description: &str) -> Result<ClassificationResult, LlmError> {
        let _slot = self.slots.acquire();
        self.bucket.take();
        self.attempts.fetch_add(1, Ordering::Relaxed);
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [{"role": "user", "content": prompt(description)}],
        });
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| LlmError::Transport(e.to_string()))?;
        match status {
            200..=299 => parse_response(&text),
            429 => Err(LlmError::RateLimited),
            500..=599 => Err(LlmError::Transport(format!("HTTP {status}"))),
            _ => Err(LlmError::BadResponse(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()))),
        }
    }
}

/// Accepts either a chat-completion envelope whose first message content is
/// the JSON object, or the bare object itself.
pub fn parse_response(body: &str) -> Result<ClassificationResult, LlmError> {
    let outer: Value = serde_json::from_str(body).map_err(|e| LlmError::BadResponse(e.to_string()))?;
    let inner = match outer.pointer("/choices/0/message/content") {
        Some(Value::String(content)) => {
            let trimmed = content.trim();
            let unfenced = trimmed
                .strip_prefix("```json")
                .or_else(|| trimmed.strip_prefix("```"))
                .and_then(|s| s.strip_suffix("```"))
                .unwrap_or(trimmed);
            serde_json::from_str(unfenced).map_err(|e| LlmError::BadResponse(format!("message content: {e}")))?
        }
        Some(_) => return Err(LlmError::BadResponse("message content is not a string".into())),
        None => outer,
    };
    let field = |name: &str| {
        inner
            .get(name)
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::BadResponse(format!("missing string field {name:?}")))
    };
    let label = field("classification")?;
    let reasoning = field("reasoning")?;
    let class = MemoryClass::from_label(label).ok_or_else(|| LlmError::UnknownLabel(label.to_owned()))?;
    Ok(ClassificationResult {
        class,
        source: ClassificationSource::Llm,
        reasoning: reasoning.to_owned(),
        confidence: Confidence::High,
    })
}
