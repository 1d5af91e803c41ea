//! Completion collection from a chat-completions HTTP endpoint, with an
//! append-only response cache, bounded parallelism, retries and answer
//! extraction.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::io;
use crate::prompt::{PromptKind, PromptRecord};
use crate::query::ReferenceKind;

/// Hard ceiling on concurrent requests, whatever the config asks for.
pub const MAX_PARALLELISM: usize = 16;
pub const API_KEY_ENV: &str = "TRC_API_KEY";
pub const DEFAULT_ANSWER_MARKER: &str = r"(?i)answer\s*:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClientError {
    #[error("endpoint rejected credentials (HTTP {0})")]
    AuthFailure(u16),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("invalid answer marker: {0}")]
    InvalidMarker(String),
}

impl ClientError {
    fn retryable(&self) -> bool {
        match self {
            ClientError::RateLimited | ClientError::Timeout | ClientError::Transport(_) => true,
            ClientError::Http { status, .. } => *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub parallelism: usize,
    pub retry_limit: u32,
    pub timeout: Duration,
    /// First retry waits about this long; each further retry doubles it.
    pub backoff_base: Duration,
    pub system_prompt: Option<String>,
    #[serde(skip)]
    pub api_key: Option<String>,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_new_tokens: 30,
            parallelism: 4,
            retry_limit: 3,
            timeout: Duration::from_secs(60),
            backoff_base: Duration::from_millis(500),
            system_prompt: None,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }

    pub fn effective_parallelism(&self) -> usize {
        self.parallelism.clamp(1, MAX_PARALLELISM)
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.backoff_base.as_secs_f64();
        let exp = base * 2f64.powi(retry.saturating_sub(1) as i32);
        let jitter = if base > 0.0 {
            rand::thread_rng().gen_range(0.0..base)
        } else {
            0.0
        };
        Duration::from_secs_f64(exp + jitter)
    }
}

/// Which extraction rule produced an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionRule {
    FirstLine,
    AfterMarker,
    LastLine,
    Empty,
}

/// Rule-based answer extraction. Non-CoT completions take the first
/// non-empty line; CoT completions take the text after the last answer
/// marker, falling back to the last non-empty line.
#[derive(Debug, Clone)]
pub struct AnswerExtractor {
    marker: Regex,
}

impl Default for AnswerExtractor {
    fn default() -> Self {
        Self {
            marker: Regex::new(DEFAULT_ANSWER_MARKER).expect("valid default marker"),
        }
    }
}

impl AnswerExtractor {
    pub fn with_marker(pattern: &str) -> Result<Self, ClientError> {
        Regex::new(pattern)
            .map(|marker| Self { marker })
            .map_err(|e| ClientError::InvalidMarker(e.to_string()))
    }

    pub fn extract(&self, raw: &str, style: PromptKind) -> (String, ExtractionRule) {
        let first_line = |s: &str| s.lines().map(str::trim).find(|l| !l.is_empty()).map(str::to_string);
        if style != PromptKind::SemanticCot {
            return match first_line(raw) {
                Some(l) => (l, ExtractionRule::FirstLine),
                None => (String::new(), ExtractionRule::Empty),
            };
        }
        if let Some(m) = self.marker.find_iter(raw).last() {
            if let Some(l) = first_line(&raw[m.end()..]) {
                return (l, ExtractionRule::AfterMarker);
            }
        }
        match raw.lines().map(str::trim).rfind(|l| !l.is_empty()) {
            Some(l) => (l.to_string(), ExtractionRule::LastLine),
            None => (String::new(), ExtractionRule::Empty),
        }
    }
}

pub fn extract_answer(raw: &str, style: PromptKind) -> String {
    AnswerExtractor::default().extract(raw, style).0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub instance_id: String,
    pub reference_kind: ReferenceKind,
    pub prompt_hash: String,
    pub raw_completion: String,
    pub answer: String,
    pub model_name: String,
    pub latency_ms: u64,
    pub extraction_rule: ExtractionRule,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Digest of the model name and the full prompt text.
pub fn prompt_hash(model_name: &str, prompt: &str) -> String {
    io::digest_bytes(format!("{model_name}\n{prompt}"))
}

/// Something that turns a prompt into a raw completion.
pub trait CompletionBackend: Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClientError>;
}

/// POSTs to `{base_url}/chat/completions`.
pub struct HttpBackend {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(config: &EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config: config.clone(),
            agent,
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let mut messages = Vec::new();
        if let Some(system) = &self.config.system_prompt {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": prompt}));
        let body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_new_tokens,
        });
        let mut req = self.agent.post(self.url());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            other => ClientError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(ClientError::AuthFailure(status)),
            429 => return Err(ClientError::RateLimited),
            _ => {
                let body = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(ClientError::Http { status, body });
            }
        }
        let value: serde_json::Value = resp.body_mut().read_json().map_err(|e| match e {
            ureq::Error::Timeout(_) => ClientError::Timeout,
            other => ClientError::MalformedResponse(other.to_string()),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::MalformedResponse("no choices[0].message.content".into()))
    }
}

/// Directory of JSONL shards keyed by the first two hex digits of the
/// prompt hash. Append-only; unreadable lines (a run killed mid-write) are
/// skipped on load.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    entries: HashMap<String, CompletionRecord>,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ClientError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| ClientError::Cache(e.to_string()))?;
        let mut entries = HashMap::new();
        let mut shards: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| ClientError::Cache(e.to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        shards.sort();
        for shard in shards {
            let file = File::open(&shard).map_err(|e| ClientError::Cache(e.to_string()))?;
            for line in BufReader::new(file).lines() {
                let Ok(line) = line else { break };
                match serde_json::from_str::<CompletionRecord>(&line) {
                    Ok(rec) => {
                        entries.entry(rec.prompt_hash.clone()).or_insert(rec);
                    }
                    Err(_) if line.trim().is_empty() => {}
                    Err(e) => log::warn!("skipping unreadable cache line in {}: {e}", shard.display()),
                }
            }
        }
        Ok(Self { dir, entries })
    }

    pub fn get(&self, hash: &str) -> Option<&CompletionRecord> {
        self.entries.get(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn shard_path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{}.jsonl", &hash[..2.min(hash.len())]))
    }

    /// Append one record to its shard, first terminating any torn last line.
    fn append(&self, rec: &CompletionRecord) -> Result<(), ClientError> {
        let path = self.shard_path(&rec.prompt_hash);
        let cache_err = |e: std::io::Error| ClientError::Cache(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(cache_err)?;
        let len = file.metadata().map_err(cache_err)?.len();
        let mut line = String::new();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1)).map_err(cache_err)?;
            file.read_exact(&mut last).map_err(cache_err)?;
            if last[0] != b'\n' {
                line.push('\n');
            }
        }
        line.push_str(&serde_json::to_string(rec).map_err(|e| ClientError::Cache(e.to_string()))?);
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(cache_err)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectOutcome {
    pub records: Vec<CompletionRecord>,
    /// Network calls made, retries included.
    pub requests: usize,
    pub cache_hits: usize,
}

impl CollectOutcome {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Collect completions over HTTP. See [`collect_with_backend`].
pub fn collect_responses(
    prompts: &[PromptRecord],
    config: &EndpointConfig,
    cache: &mut ResponseCache,
    style: PromptKind,
    extractor: &AnswerExtractor,
) -> Result<CollectOutcome, ClientError> {
    collect_with_backend(prompts, config, cache, style, extractor, &HttpBackend::new(config))
}

/// One record per prompt, in input order. Cache hits skip the backend;
/// successful fresh completions are appended to the cache through a single
/// writer thread. Failures that survive retries are recorded with an error
/// marker; an authentication failure aborts the whole batch.
pub fn collect_with_backend(
    prompts: &[PromptRecord],
    config: &EndpointConfig,
    cache: &mut ResponseCache,
    style: PromptKind,
    extractor: &AnswerExtractor,
    backend: &dyn CompletionBackend,
) -> Result<CollectOutcome, ClientError> {
    let hashes: Vec<String> = prompts
        .iter()
        .map(|p| prompt_hash(&config.model_name, &p.prompt))
        .collect();
    let mut slots: Vec<Option<CompletionRecord>> = Vec::with_capacity(prompts.len());
    let mut pending: Vec<usize> = Vec::new();
    let mut first_for_hash: HashMap<&str, usize> = HashMap::new();
    let mut duplicates: Vec<(usize, usize)> = Vec::new();
    let mut cache_hits = 0;
    for (i, (p, h)) in prompts.iter().zip(&hashes).enumerate() {
        if let Some(hit) = cache.get(h) {
            cache_hits += 1;
            slots.push(Some(CompletionRecord {
                instance_id: p.instance_id.clone(),
                reference_kind: p.reference_kind,
                ..hit.clone()
            }));
        } else if let Some(&first) = first_for_hash.get(h.as_str()) {
            duplicates.push((i, first));
            slots.push(None);
        } else {
            first_for_hash.insert(h, i);
            pending.push(i);
            slots.push(None);
        }
    }

    let next = AtomicUsize::new(0);
    let requests = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let auth_error: Mutex<Option<ClientError>> = Mutex::new(None);
    let results: Mutex<Vec<(usize, CompletionRecord)>> = Mutex::new(Vec::new());
    let (tx, rx) = mpsc::channel::<CompletionRecord>();
    let cache_ref = &*cache;

    let write_result = thread::scope(|scope| {
        let writer = scope.spawn(move || -> Result<(), ClientError> {
            for rec in rx {
                cache_ref.append(&rec)?;
            }
            Ok(())
        });
        let workers = config.effective_parallelism().min(pending.len().max(1));
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, requests, abort, auth_error, results) =
                (&next, &requests, &abort, &auth_error, &results);
            let (pending, hashes) = (&pending, &hashes);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = pending.get(k) else { break };
                let p = &prompts[i];
                let started = Instant::now();
                let mut attempts = 0;
                let outcome = loop {
                    attempts += 1;
                    requests.fetch_add(1, Ordering::SeqCst);
                    match backend.complete(&p.prompt) {
                        Ok(text) => break Ok(text),
                        Err(e) if e.retryable() && attempts <= config.retry_limit => {
                            log::warn!(
                                "{} ({}): {e}; retry {attempts} of {}",
                                p.instance_id,
                                p.reference_kind.as_str(),
                                config.retry_limit
                            );
                            thread::sleep(config.backoff(attempts));
                        }
                        Err(e) => break Err(e),
                    }
                };
                let latency_ms = started.elapsed().as_millis() as u64;
                let rec = match outcome {
                    Ok(raw) => {
                        let (answer, rule) = extractor.extract(&raw, style);
                        CompletionRecord {
                            instance_id: p.instance_id.clone(),
                            reference_kind: p.reference_kind,
                            prompt_hash: hashes[i].clone(),
                            raw_completion: raw,
                            answer,
                            model_name: config.model_name.clone(),
                            latency_ms,
                            extraction_rule: rule,
                            attempts,
                            error: None,
                        }
                    }
                    Err(e @ ClientError::AuthFailure(_)) => {
                        abort.store(true, Ordering::SeqCst);
                        auth_error.lock().expect("lock").get_or_insert(e);
                        break;
                    }
                    Err(e) => CompletionRecord {
                        instance_id: p.instance_id.clone(),
                        reference_kind: p.reference_kind,
                        prompt_hash: hashes[i].clone(),
                        raw_completion: String::new(),
                        answer: String::new(),
                        model_name: config.model_name.clone(),
                        latency_ms,
                        extraction_rule: ExtractionRule::Empty,
                        attempts,
                        error: Some(e.to_string()),
                    },
                };
                if rec.error.is_none() {
                    // The writer only stops on a cache error, reported below.
                    let _ = tx.send(rec.clone());
                }
                results.lock().expect("lock").push((i, rec));
            });
        }
        drop(tx);
        writer.join().expect("cache writer panicked")
    });

    if let Some(e) = auth_error.into_inner().expect("lock") {
        return Err(e);
    }
    write_result?;
    let fresh = results.into_inner().expect("lock");
    for (_, rec) in fresh.iter().filter(|(_, r)| r.error.is_none()) {
        cache.entries.entry(rec.prompt_hash.clone()).or_insert_with(|| rec.clone());
    }
    for (i, rec) in fresh {
        slots[i] = Some(rec);
    }
    for (i, first) in duplicates {
        let src = slots[first].clone().expect("first occurrence collected");
        slots[i] = Some(CompletionRecord {
            instance_id: prompts[i].instance_id.clone(),
            reference_kind: prompts[i].reference_kind,
            ..src
        });
    }
    Ok(CollectOutcome {
        records: slots.into_iter().map(|s| s.expect("every slot filled")).collect(),
        requests: requests.into_inner(),
        cache_hits,
    })
}
