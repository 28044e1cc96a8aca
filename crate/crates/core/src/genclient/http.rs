use std::env;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use log::debug;
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::pool::InFlightLimiter;
use super::{
    ChatBackend, EmbedInput, EmbeddingBackend, EmbeddingVector, GenError, GenerationConfig, ScoreItem, ScoringBackend,
};

pub const ENV_API_BASE: &str = "FORGE_API_BASE";
pub const ENV_API_KEY: &str = "FORGE_API_KEY";
pub const ENV_EMBED_BASE: &str = "FORGE_EMBED_BASE";
pub const ENV_SCORER_BASE: &str = "FORGE_SCORER_BASE";

const EMBED_BATCH: usize = 32;
const SCORE_BATCH: usize = 64;

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with jitter in [50%, 100%] of the nominal delay.
    fn delay(&self, retry: u32) -> Duration {
        let nominal = self
            .base_delay
            .saturating_mul(1u32 << retry.min(16))
            .min(self.max_delay);
        nominal.mul_f64(rand::rng().random_range(0.5..=1.0))
    }
}

#[derive(Debug, Default)]
pub struct RetryStats {
    requests: AtomicU64,
    retries: AtomicU64,
}

impl RetryStats {
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }
}

/// Endpoint settings, usually read from the environment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub api_base: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub embed_base: Option<String>,
    pub scorer_base: Option<String>,
}

fn non_empty_var(name: &str) -> Option<String> {
    env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl Endpoints {
    pub fn from_env() -> Self {
        Endpoints {
            api_base: non_empty_var(ENV_API_BASE),
            api_key: non_empty_var(ENV_API_KEY),
            embed_base: non_empty_var(ENV_EMBED_BASE),
            scorer_base: non_empty_var(ENV_SCORER_BASE),
        }
    }

    fn transport(
        &self,
        base: &Option<String>,
        var: &str,
        limiter: &Arc<InFlightLimiter>,
        retry: &RetryPolicy,
    ) -> Result<Transport, GenError> {
        let base = base
            .clone()
            .ok_or_else(|| GenError::ConfigMissing(format!("{var} is not set")))?;
        Transport::new(base, self.api_key.clone(), limiter.clone(), retry.clone())
    }

    pub fn chat_client(&self, limiter: &Arc<InFlightLimiter>, retry: &RetryPolicy) -> Result<HttpChatClient, GenError> {
        Ok(HttpChatClient {
            transport: self.transport(&self.api_base, ENV_API_BASE, limiter, retry)?,
        })
    }

    pub fn embedding_client(
        &self,
        model: &str,
        limiter: &Arc<InFlightLimiter>,
        retry: &RetryPolicy,
    ) -> Result<HttpEmbeddingClient, GenError> {
        Ok(HttpEmbeddingClient {
            transport: self.transport(&self.embed_base, ENV_EMBED_BASE, limiter, retry)?,
            model: model.to_string(),
        })
    }

    pub fn scoring_client(
        &self,
        scale: ScoreScale,
        limiter: &Arc<InFlightLimiter>,
        retry: &RetryPolicy,
    ) -> Result<HttpScoringClient, GenError> {
        Ok(HttpScoringClient {
            transport: self.transport(&self.scorer_base, ENV_SCORER_BASE, limiter, retry)?,
            scale,
        })
    }
}

#[derive(Debug)]
struct Transport {
    http: Client,
    base: String,
    key: Option<String>,
    limiter: Arc<InFlightLimiter>,
    retry: RetryPolicy,
    stats: RetryStats,
}

impl Transport {
    fn new(
        base: String,
        key: Option<String>,
        limiter: Arc<InFlightLimiter>,
        retry: RetryPolicy,
    ) -> Result<Self, GenError> {
        let http = Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| GenError::EndpointUnreachable(e.to_string()))?;
        Ok(Transport {
            http,
            base: base.trim_end_matches('/').to_string(),
            key,
            limiter,
            retry,
            stats: RetryStats::default(),
        })
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, GenError> {
        let _permit = self.limiter.acquire();
        self.stats.requests.fetch_add(1, Ordering::Relaxed);
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| GenError::EndpointUnreachable(format!("{url}: {e}")))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json::<R>().map_err(|e| GenError::Decode(e.to_string()));
        }
        let body = resp.text().unwrap_or_default();
        Err(if status == StatusCode::TOO_MANY_REQUESTS {
            GenError::RateLimited { attempts: 1 }
        } else if status.is_server_error() {
            GenError::Server {
                status: status.as_u16(),
                body,
            }
        } else {
            GenError::BadRequest {
                status: status.as_u16(),
                body,
            }
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, GenError> {
        let url = format!("{}{path}", self.base);
        let attempts = self.retry.max_attempts.max(1);
        let mut n = 0;
        loop {
            n += 1;
            match self.attempt(&url, body) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && n < attempts => {
                    let wait = self.retry.delay(n - 1);
                    debug!("{url}: {e}; retry {n} in {wait:?}");
                    self.stats.retries.fetch_add(1, Ordering::Relaxed);
                    thread::sleep(wait);
                }
                Err(GenError::RateLimited { .. }) => return Err(GenError::RateLimited { attempts: n }),
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatContent,
}

#[derive(Deserialize)]
struct ChatContent {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug)]
pub struct HttpChatClient {
    transport: Transport,
}

impl HttpChatClient {
    pub fn stats(&self) -> &RetryStats {
        &self.transport.stats
    }
}

impl ChatBackend for HttpChatClient {
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, GenError> {
        let req = ChatRequest {
            model: &cfg.model_id,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: cfg.temperature,
            max_tokens: cfg.max_new_tokens,
            stop: &cfg.stop_sequences,
            seed: cfg.seed,
        };
        let resp: ChatResponse = self.transport.post("/chat/completions", &req)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(GenError::EmptyCompletion)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

#[derive(Debug)]
pub struct HttpEmbeddingClient {
    transport: Transport,
    model: String,
}

impl HttpEmbeddingClient {
    pub fn stats(&self) -> &RetryStats {
        &self.transport.stats
    }
}

impl EmbeddingBackend for HttpEmbeddingClient {
    fn embed(&self, items: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, GenError> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(EMBED_BATCH) {
            let req = EmbedRequest {
                model: &self.model,
                input: chunk.iter().map(|i| i.text).collect(),
            };
            let resp: EmbedResponse = self.transport.post("/embeddings", &req)?;
            if resp.data.len() != chunk.len() {
                return Err(GenError::CountMismatch {
                    expected: chunk.len(),
                    found: resp.data.len(),
                });
            }
            for d in resp.data {
                out.push(EmbeddingVector::new(d.embedding)?);
            }
        }
        Ok(out)
    }
}

/// Native scale of a scoring service. Unit-scale scores are multiplied by 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    #[default]
    Percent,
    Unit,
}

#[derive(Serialize)]
struct ScoreRequestItem<'a> {
    src: &'a str,
    mt: &'a str,
    #[serde(rename = "ref")]
    reference: Option<&'a str>,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    items: Vec<ScoreRequestItem<'a>>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Debug)]
pub struct HttpScoringClient {
    transport: Transport,
    scale: ScoreScale,
}

impl HttpScoringClient {
    pub fn stats(&self) -> &RetryStats {
        &self.transport.stats
    }
}

impl ScoringBackend for HttpScoringClient {
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<f64>, GenError> {
        let factor = match self.scale {
            ScoreScale::Percent => 1.0,
            ScoreScale::Unit => 100.0,
        };
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(SCORE_BATCH) {
            let req = ScoreRequest {
                items: chunk
                    .iter()
                    .map(|i| ScoreRequestItem {
                        src: &i.source,
                        mt: &i.hypothesis,
                        reference: i.reference.as_deref(),
                    })
                    .collect(),
            };
            let resp: ScoreResponse = self.transport.post("/score", &req)?;
            if resp.scores.len() != chunk.len() {
                return Err(GenError::CountMismatch {
                    expected: chunk.len(),
                    found: resp.scores.len(),
                });
            }
            out.extend(resp.scores.into_iter().map(|s| s * factor));
        }
        Ok(out)
    }
}
