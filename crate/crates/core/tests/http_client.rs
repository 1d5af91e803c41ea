mod common;

use std::collections::HashMap;
use std::time::Duration;

use common::mock_server::{chat_reply, MockServer};
use trc_core::client::{collect_responses, AnswerExtractor, ClientError, EndpointConfig, ResponseCache};
use trc_core::io;
use trc_core::metrics::{evaluate, pair_responses, EvalOptions, ResponseRecord};
use trc_core::prompt::{build_prompts, PromptKind, PromptRecord, PromptStyle};

fn config(server: &MockServer) -> EndpointConfig {
    let mut c = EndpointConfig::new(&server.url, "mock-model");
    c.backoff_base = Duration::from_millis(5);
    c.timeout = Duration::from_secs(5);
    c.api_key = Some("secret".into());
    c
}

fn prompts(n: usize) -> Vec<PromptRecord> {
    let dataset = common::synthetic_instances(n, 11);
    build_prompts(&dataset, &dataset, PromptStyle::zero_shot(), 0).unwrap()
}

fn last_question(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("Question: "))
        .unwrap_or_default()
}

#[test]
fn wire_format_and_retries() {
    let server = MockServer::start(Duration::ZERO, |req| {
        if req.index < 2 {
            (503, "{\"error\":\"busy\"}".into())
        } else {
            (200, chat_reply("Blue FC\nextra"))
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let mut cache = ResponseCache::open(dir.path()).unwrap();
    let ps = prompts(1)[..1].to_vec();
    let out = collect_responses(&ps, &config(&server), &mut cache, PromptKind::ZeroShot, &AnswerExtractor::default())
        .unwrap();
    assert_eq!(out.records.len(), 1);
    let rec = &out.records[0];
    assert_eq!(rec.attempts, 3);
    assert_eq!(rec.answer, "Blue FC");
    assert_eq!(rec.raw_completion, "Blue FC\nextra");
    assert!(rec.error.is_none());
    assert_eq!(server.requests(), 3);

    let seen = server.stats.seen.lock().unwrap();
    let (path, auth, body) = &seen[0];
    assert_eq!(path, "/chat/completions");
    assert_eq!(auth.as_deref(), Some("Bearer secret"));
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["max_tokens"], 30);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], ps[0].prompt.as_str());
}

#[test]
fn concurrency_stays_bounded() {
    let server = MockServer::start(Duration::from_millis(40), |_| (200, chat_reply("x")));
    let dir = tempfile::tempdir().unwrap();
    let mut cache = ResponseCache::open(dir.path()).unwrap();
    let ps = prompts(12);
    let mut cfg = config(&server);
    cfg.parallelism = 3;
    let out = collect_responses(&ps, &cfg, &mut cache, PromptKind::ZeroShot, &AnswerExtractor::default()).unwrap();
    assert_eq!(out.records.len(), 24);
    assert!(server.max_in_flight() <= 3, "{}", server.max_in_flight());
    assert!(server.max_in_flight() >= 2, "worker pool never overlapped");
    let ids: Vec<_> = out.records.iter().map(|r| (&r.instance_id, r.reference_kind)).collect();
    let expected: Vec<_> = ps.iter().map(|p| (&p.instance_id, p.reference_kind)).collect();
    assert_eq!(ids, expected);
}

#[test]
fn warm_cache_makes_no_calls_and_is_byte_identical() {
    let server = MockServer::start(Duration::ZERO, |req| (200, chat_reply(&format!("a{}", req.prompt().len()))));
    let dir = tempfile::tempdir().unwrap();
    let ps = prompts(5);
    let cfg = config(&server);
    let x = AnswerExtractor::default();
    let mut cache = ResponseCache::open(dir.path()).unwrap();
    let cold = collect_responses(&ps, &cfg, &mut cache, PromptKind::ZeroShot, &x).unwrap();
    let calls = server.requests();
    assert_eq!(calls, 10);

    let mut reopened = ResponseCache::open(dir.path()).unwrap();
    let warm = collect_responses(&ps, &cfg, &mut reopened, PromptKind::ZeroShot, &x).unwrap();
    assert_eq!(server.requests(), calls);
    assert_eq!(warm.cache_hits, 10);
    assert_eq!(
        io::to_jsonl_string(&cold.records).unwrap(),
        io::to_jsonl_string(&warm.records).unwrap()
    );

    // A different model shares the store but not the entries.
    let mut other = cfg.clone();
    other.model_name = "other-model".into();
    collect_responses(&ps, &other, &mut reopened, PromptKind::ZeroShot, &x).unwrap();
    assert_eq!(server.requests(), 2 * calls);
}

#[test]
fn auth_failure_fails_fast() {
    let server = MockServer::start(Duration::ZERO, |_| (401, "{}".into()));
    let dir = tempfile::tempdir().unwrap();
    let mut cache = ResponseCache::open(dir.path()).unwrap();
    let mut cfg = config(&server);
    cfg.parallelism = 1;
    let err = collect_responses(&prompts(4), &cfg, &mut cache, PromptKind::ZeroShot, &AnswerExtractor::default())
        .unwrap_err();
    assert_eq!(err, ClientError::AuthFailure(401));
    assert_eq!(server.requests(), 1);
}

#[test]
fn persistent_failures_are_marked_and_batch_continues() {
    let server = MockServer::start(Duration::ZERO, |req| {
        if last_question(req.prompt()).contains("right before") {
            (500, "{}".into())
        } else {
            (200, chat_reply("fine"))
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let mut cache = ResponseCache::open(dir.path()).unwrap();
    let mut cfg = config(&server);
    cfg.retry_limit = 1;
    let ps = prompts(6);
    let out = collect_responses(&ps, &cfg, &mut cache, PromptKind::ZeroShot, &AnswerExtractor::default()).unwrap();
    assert_eq!(out.records.len(), ps.len());
    let failed = out.failures();
    assert!(failed > 0 && failed < ps.len());
    for r in out.records.iter().filter(|r| r.error.is_some()) {
        assert_eq!(r.attempts, 2);
        assert_eq!(r.answer, "");
    }
    assert_eq!(cache.len(), ps.len() - failed);
}

#[test]
fn gold_echoing_endpoint_scores_perfectly() {
    let dataset = common::synthetic_instances(20, 4);
    let gold: HashMap<String, String> = dataset
        .iter()
        .flat_map(|i| {
            [
                (i.query_absolute.clone(), i.answer.clone()),
                (i.query_chronological.clone(), i.answer.clone()),
            ]
        })
        .collect();
    let server = MockServer::start(Duration::ZERO, move |req| {
        (200, chat_reply(&gold[last_question(req.prompt())]))
    });
    let dir = tempfile::tempdir().unwrap();
    let mut cache = ResponseCache::open(dir.path()).unwrap();
    let ps = build_prompts(&dataset, &dataset, PromptStyle::icl(3), 0).unwrap();
    let out = collect_responses(&ps, &config(&server), &mut cache, PromptKind::Icl, &AnswerExtractor::default())
        .unwrap();
    // Completion records are read back as plain response records.
    let responses: Vec<ResponseRecord> = out
        .records
        .iter()
        .map(|r| serde_json::from_value(serde_json::to_value(r).unwrap()).unwrap())
        .collect();
    let report = evaluate(&dataset, &pair_responses(&responses).unwrap(), EvalOptions::default()).unwrap();
    for v in [report.em_ctr, report.em_atr, report.f1_ctr, report.f1_atr, report.trc, report.trcf] {
        assert_eq!(v, 100.0);
    }
    assert_eq!(report.dev_em, 0.0);
}
