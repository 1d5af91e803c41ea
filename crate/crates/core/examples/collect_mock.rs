//! Collect completions through the cached, parallel collector using an
//! in-process backend, then score them.
//!
//! Swap `Oracle` for `HttpBackend` (or call `collect_responses`) to hit a
//! chat-completions endpoint; the key is read from `TRC_API_KEY`.

use std::collections::HashMap;

use anyhow::Result;
use trc_core::client::{
    collect_with_backend, AnswerExtractor, ClientError, CompletionBackend, EndpointConfig,
    ResponseCache,
};
use trc_core::metrics::{evaluate, pair_responses, EvalOptions, ResponseRecord};
use trc_core::prompt::{build_prompts, PromptStyle};
use trc_core::query::build_dataset;
use trc_core::relation::RelationTable;
use trc_core::synthetic::answerable_records;

/// Knows every answer but only finds it from the chronological phrasing.
struct Oracle {
    answers: HashMap<String, String>,
}

impl CompletionBackend for Oracle {
    fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let question = prompt.lines().rev().find_map(|l| l.strip_prefix("Question: ")).unwrap_or("");
        Ok(self.answers.get(question).cloned().unwrap_or_else(|| "I am not sure.".into()))
    }
}

fn main() -> Result<()> {
    let table = RelationTable::builtin();
    let dataset = build_dataset(&answerable_records(50, 4, table), table).instances;
    let prompts = build_prompts(&dataset, &dataset, PromptStyle::zero_shot(), 0)?;
    let backend = Oracle {
        answers: dataset.iter().map(|i| (i.query_chronological.clone(), i.answer.clone())).collect(),
    };

    let cache_dir = tempfile::tempdir()?;
    let config = EndpointConfig::new("http://unused.invalid", "oracle");
    let extractor = AnswerExtractor::default();
    for run in ["cold", "warm"] {
        let mut cache = ResponseCache::open(cache_dir.path())?;
        let out = collect_with_backend(&prompts, &config, &mut cache, PromptStyle::zero_shot().kind, &extractor, &backend)?;
        println!("{run}: {} records, {} requests, {} cache hits", out.records.len(), out.requests, out.cache_hits);
        if run == "warm" {
            let records: Vec<ResponseRecord> = out
                .records
                .iter()
                .map(|r| serde_json::from_value(serde_json::to_value(r)?))
                .collect::<Result<_, _>>()?;
            let report = evaluate(&dataset, &pair_responses(&records)?, EvalOptions::default())?.rounded();
            println!("EM CTR {} ATR {} dev {}; TRC {}", report.em_ctr, report.em_atr, report.dev_em, report.trc);
        }
    }
    Ok(())
}
