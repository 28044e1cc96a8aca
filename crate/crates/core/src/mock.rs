//! In-process HTTP server that imitates the chat, embedding and scoring
//! endpoints for tests. It records how many requests are in flight so
//! callers can check their concurrency limits.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::oneshot;

use crate::metric::compute_chrf;

#[derive(Debug, Clone)]
pub enum ChatMode {
    /// Deterministic pseudo-translation derived from the query source.
    Hash,
    Fixed(String),
    /// Query source to translation; unknown sources fall back to `Hash`.
    Lookup(HashMap<String, String>),
}

#[derive(Debug, Clone)]
pub enum ScoreMode {
    Constant(f64),
    /// Deterministic value in [0, 100] from the hypothesis text.
    Hash,
    /// chrF against the reference, 0 when none is sent.
    Chrf,
}

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub chat: ChatMode,
    pub score: ScoreMode,
    pub embed_dim: usize,
    pub delay: Duration,
    /// The first N requests get HTTP 429.
    pub fail_first: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            chat: ChatMode::Hash,
            score: ScoreMode::Chrf,
            embed_dim: 16,
            delay: Duration::ZERO,
            fail_first: 0,
        }
    }
}

#[derive(Default)]
struct Counters {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    rate_limited: AtomicUsize,
}

struct Shared {
    cfg: MockConfig,
    counters: Counters,
}

type AppState = Arc<Shared>;

pub struct MockServer {
    addr: SocketAddr,
    shared: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<thread::JoinHandle<()>>,
}

fn fnv1a(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const VOCAB: [&str; 16] = [
    "I", "you", "we", "go", "home", "now", "want", "coffee", "tomorrow", "friend", "how", "are", "good", "here",
    "there", "today",
];

fn hash_translation(source: &str) -> String {
    let mut h = fnv1a(source);
    let n = 3 + (h % 4) as usize;
    let mut words = Vec::with_capacity(n);
    for _ in 0..n {
        h = h.rotate_right(7).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        words.push(VOCAB[(h >> 60) as usize]);
    }
    words.join(" ")
}

/// Source sentence of the open block at the end of a prompt.
pub fn query_source(prompt: &str) -> &str {
    let tail = prompt.rsplit("### Input:\n").next().unwrap_or(prompt);
    tail.split("\n\n").next().unwrap_or(tail).trim()
}

struct InFlight<'a>(&'a Counters);

impl<'a> InFlight<'a> {
    fn enter(c: &'a Counters) -> Self {
        let now = c.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        c.max_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(c)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn admit(s: &Shared) -> Option<Response> {
    let n = s.counters.requests.fetch_add(1, Ordering::SeqCst);
    if !s.cfg.delay.is_zero() {
        tokio::time::sleep(s.cfg.delay).await;
    }
    if n < s.cfg.fail_first {
        s.counters.rate_limited.fetch_add(1, Ordering::SeqCst);
        return Some((StatusCode::TOO_MANY_REQUESTS, "slow down").into_response());
    }
    None
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

#[derive(Deserialize)]
struct ChatRequest {
    messages: Vec<ChatMessage>,
}

async fn chat(State(s): State<AppState>, Json(req): Json<ChatRequest>) -> Response {
    let _guard = InFlight::enter(&s.counters);
    if let Some(r) = admit(&s).await {
        return r;
    }
    let prompt = req.messages.last().map(|m| m.content.as_str()).unwrap_or_default();
    let source = query_source(prompt);
    let text = match &s.cfg.chat {
        ChatMode::Hash => hash_translation(source),
        ChatMode::Fixed(t) => t.clone(),
        ChatMode::Lookup(map) => map.get(source).cloned().unwrap_or_else(|| hash_translation(source)),
    };
    Json(json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]})).into_response()
}

#[derive(Deserialize)]
struct EmbedRequest {
    input: Vec<String>,
}

async fn embeddings(State(s): State<AppState>, Json(req): Json<EmbedRequest>) -> Response {
    let _guard = InFlight::enter(&s.counters);
    if let Some(r) = admit(&s).await {
        return r;
    }
    let dim = s.cfg.embed_dim.max(1);
    let data: Vec<Value> = req
        .input
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let mut h = fnv1a(text);
            let v: Vec<f32> = (0..dim)
                .map(|_| {
                    h = h.rotate_left(13).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                    ((h >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
                })
                .collect();
            json!({"index": i, "embedding": v})
        })
        .collect();
    Json(json!({ "data": data })).into_response()
}

#[derive(Deserialize)]
struct ScoreItem {
    mt: String,
    #[serde(rename = "ref")]
    reference: Option<String>,
}

#[derive(Deserialize)]
struct ScoreRequest {
    items: Vec<ScoreItem>,
}

async fn score(State(s): State<AppState>, Json(req): Json<ScoreRequest>) -> Response {
    let _guard = InFlight::enter(&s.counters);
    if let Some(r) = admit(&s).await {
        return r;
    }
    let scores: Vec<f64> = req
        .items
        .iter()
        .map(|item| match &s.cfg.score {
            ScoreMode::Constant(c) => *c,
            ScoreMode::Hash => (fnv1a(&item.mt) % 10_001) as f64 / 100.0,
            ScoreMode::Chrf => item.reference.as_deref().map_or(0.0, |r| compute_chrf(&item.mt, r)),
        })
        .collect();
    Json(json!({ "scores": scores })).into_response()
}

async fn probe(State(s): State<AppState>) -> Json<Value> {
    let c = &s.counters;
    Json(json!({
        "requests": c.requests.load(Ordering::SeqCst),
        "in_flight": c.in_flight.load(Ordering::SeqCst),
        "max_in_flight": c.max_in_flight.load(Ordering::SeqCst),
        "rate_limited": c.rate_limited.load(Ordering::SeqCst),
    }))
}

impl MockServer {
    /// Binds 127.0.0.1 on a free port and serves from a background thread.
    pub fn start(cfg: MockConfig) -> std::io::Result<MockServer> {
        let shared = Arc::new(Shared {
            cfg,
            counters: Counters::default(),
        });
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let app = Router::new()
            .route("/chat/completions", post(chat))
            .route("/embeddings", post(embeddings))
            .route("/score", post(score))
            .route("/probe", get(probe))
            .with_state(shared.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let handle = thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(MockServer {
            addr,
            shared,
            shutdown: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> usize {
        self.shared.counters.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.shared.counters.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn rate_limited(&self) -> usize {
        self.shared.counters.rate_limited.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
