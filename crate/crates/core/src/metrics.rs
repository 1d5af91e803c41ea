//! Answer scoring across the two temporal references.
//!
//! Per-arm factuality (EM and token F1), the signed factual deviation between
//! arms, referential consistency (both arms agree), consistent factuality
//! (both arms agree and are correct), and Pearson correlation for the
//! per-entity error analysis.
//!
//! All percentages are on a 0–100 scale. Comparisons go through
//! [`normalize_answer`] unless [`Comparison::Strict`] is requested.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{BenchmarkInstance, ReferenceKind};
use crate::relation::EntityType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no responses to score")]
    EmptyInput,
    #[error("no gold answer for instance `{0}`")]
    MissingGold(String),
    #[error("response references unknown instance `{0}`")]
    UnknownInstanceId(String),
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("instance `{id}` has no {kind} response")]
    IncompleteResponsePair { id: String, kind: &'static str },
    #[error("instance `{id}` has more than one {kind} response")]
    DuplicateResponse { id: String, kind: &'static str },
}

/// How answers are compared.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Lowercase, strip punctuation and articles, collapse whitespace.
    #[default]
    Normalized,
    /// Raw string equality; F1 over whitespace tokens.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    Em,
    F1,
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

pub fn normalize_answer(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_string)
        .collect()
}

fn tokens(text: &str, cmp: Comparison) -> Vec<String> {
    match cmp {
        Comparison::Normalized => normalize_answer(text),
        Comparison::Strict => text.split_whitespace().map(str::to_string).collect(),
    }
}

fn same(a: &str, b: &str, cmp: Comparison) -> bool {
    match cmp {
        Comparison::Normalized => normalize_answer(a) == normalize_answer(b),
        Comparison::Strict => a == b,
    }
}

/// 1 iff the normalized token sequences are identical.
pub fn exact_match(pred: &str, gold: &str) -> u8 {
    exact_match_with(pred, gold, Comparison::Normalized)
}

pub fn exact_match_with(pred: &str, gold: &str, cmp: Comparison) -> u8 {
    u8::from(same(pred, gold, cmp))
}

/// Harmonic mean of token precision and recall over token multisets.
pub fn token_f1(pred: &str, gold: &str) -> f64 {
    token_f1_with(pred, gold, Comparison::Normalized)
}

pub fn token_f1_with(pred: &str, gold: &str, cmp: Comparison) -> f64 {
    let p = tokens(pred, cmp);
    let g = tokens(gold, cmp);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

fn score(pred: &str, gold: &str, scorer: Scorer, cmp: Comparison) -> f64 {
    match scorer {
        Scorer::Em => f64::from(exact_match_with(pred, gold, cmp)),
        Scorer::F1 => token_f1_with(pred, gold, cmp),
    }
}

/// Mean that does not depend on input order (summed in sorted order).
fn order_free_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

/// A model's answers to the absolute and chronological query of one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponsePair {
    pub instance_id: String,
    pub answer_absolute: String,
    pub answer_chronological: String,
}

impl ResponsePair {
    pub fn new(
        instance_id: impl Into<String>,
        answer_absolute: impl Into<String>,
        answer_chronological: impl Into<String>,
    ) -> Self {
        Self {
            instance_id: instance_id.into(),
            answer_absolute: answer_absolute.into(),
            answer_chronological: answer_chronological.into(),
        }
    }
}

/// `mean(absolute) − mean(chronological)`, in the units of the inputs.
pub fn mean_difference(absolute: &[f64], chronological: &[f64]) -> Result<f64, MetricError> {
    if absolute.is_empty() || chronological.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    Ok(order_free_mean(absolute) - order_free_mean(chronological))
}

fn gold_for<'a>(golds: &'a HashMap<String, String>, id: &str) -> Result<&'a str, MetricError> {
    golds
        .get(id)
        .map(String::as_str)
        .ok_or_else(|| MetricError::MissingGold(id.to_string()))
}

/// Temporal referential factual deviation, in percentage points:
/// mean factuality on absolute queries minus mean on chronological queries.
pub fn factual_deviation(
    pairs: &[ResponsePair],
    golds: &HashMap<String, String>,
    scorer: Scorer,
) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut abs = Vec::with_capacity(pairs.len());
    let mut chr = Vec::with_capacity(pairs.len());
    for p in pairs {
        let gold = gold_for(golds, &p.instance_id)?;
        abs.push(100.0 * score(&p.answer_absolute, gold, scorer, Comparison::Normalized));
        chr.push(100.0 * score(&p.answer_chronological, gold, scorer, Comparison::Normalized));
    }
    mean_difference(&abs, &chr)
}

/// Percentage of pairs whose two answers are identical after normalization.
pub fn referential_consistency(pairs: &[ResponsePair]) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let hits = pairs
        .iter()
        .filter(|p| same(&p.answer_absolute, &p.answer_chronological, Comparison::Normalized))
        .count();
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

/// Percentage of pairs whose answers agree with each other and with the gold.
pub fn consistent_factuality(
    pairs: &[ResponsePair],
    golds: &HashMap<String, String>,
) -> Result<f64, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut hits = 0usize;
    for p in pairs {
        let gold = gold_for(golds, &p.instance_id)?;
        let cmp = Comparison::Normalized;
        if same(&p.answer_absolute, &p.answer_chronological, cmp)
            && same(&p.answer_absolute, gold, cmp)
        {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::ZeroVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Round to two decimals, ties to even.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round_ties_even() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub trc: f64,
    pub trcf: f64,
    pub count: usize,
}

/// Aggregate scores for one response set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub em_ctr: f64,
    pub em_atr: f64,
    pub f1_ctr: f64,
    pub f1_atr: f64,
    pub dev_em: f64,
    pub dev_f1: f64,
    pub trc: f64,
    pub trcf: f64,
    pub per_entity: BTreeMap<EntityType, Breakdown>,
    pub per_language: BTreeMap<String, Breakdown>,
    pub m: usize,
}

impl EvalReport {
    /// Copy with every percentage rounded to two decimals. Deviations are
    /// recomputed from the rounded arms so `dev = atr − ctr` holds exactly
    /// as printed.
    pub fn rounded(&self) -> EvalReport {
        let r = |b: &Breakdown| Breakdown {
            trc: round2(b.trc),
            trcf: round2(b.trcf),
            count: b.count,
        };
        let em_ctr = round2(self.em_ctr);
        let em_atr = round2(self.em_atr);
        let f1_ctr = round2(self.f1_ctr);
        let f1_atr = round2(self.f1_atr);
        EvalReport {
            em_ctr,
            em_atr,
            f1_ctr,
            f1_atr,
            dev_em: round2(em_atr - em_ctr),
            dev_f1: round2(f1_atr - f1_ctr),
            trc: round2(self.trc),
            trcf: round2(self.trcf),
            per_entity: self.per_entity.iter().map(|(k, v)| (*k, r(v))).collect(),
            per_language: self.per_language.iter().map(|(k, v)| (k.clone(), r(v))).collect(),
            m: self.m,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub comparison: Comparison,
}

struct PairScore {
    em_abs: bool,
    em_chr: bool,
    f1_abs: f64,
    f1_chr: f64,
    consistent: bool,
    consistent_fact: bool,
    entity: EntityType,
    language: String,
}

#[derive(Default)]
struct Tally {
    consistent: usize,
    consistent_fact: usize,
    count: usize,
}

impl Tally {
    fn breakdown(&self) -> Breakdown {
        Breakdown {
            trc: 100.0 * self.consistent as f64 / self.count as f64,
            trcf: 100.0 * self.consistent_fact as f64 / self.count as f64,
            count: self.count,
        }
    }
}

/// Score a response set against its dataset.
pub fn evaluate(
    dataset: &[BenchmarkInstance],
    pairs: &[ResponsePair],
    options: EvalOptions,
) -> Result<EvalReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let by_id: HashMap<&str, &BenchmarkInstance> =
        dataset.iter().map(|i| (i.id.as_str(), i)).collect();
    let cmp = options.comparison;
    let scores: Vec<PairScore> = pairs
        .par_iter()
        .map(|p| {
            let inst = by_id
                .get(p.instance_id.as_str())
                .ok_or_else(|| MetricError::UnknownInstanceId(p.instance_id.clone()))?;
            let gold = inst.answer.as_str();
            let em_abs = same(&p.answer_absolute, gold, cmp);
            let em_chr = same(&p.answer_chronological, gold, cmp);
            let consistent = same(&p.answer_absolute, &p.answer_chronological, cmp);
            Ok(PairScore {
                em_abs,
                em_chr,
                f1_abs: token_f1_with(&p.answer_absolute, gold, cmp),
                f1_chr: token_f1_with(&p.answer_chronological, gold, cmp),
                consistent,
                consistent_fact: consistent && em_abs,
                entity: inst.entity_type,
                language: inst.language.clone(),
            })
        })
        .collect::<Result<_, MetricError>>()?;

    let m = scores.len();
    let pct = |n: usize| 100.0 * n as f64 / m as f64;
    let em_ctr = pct(scores.iter().filter(|s| s.em_chr).count());
    let em_atr = pct(scores.iter().filter(|s| s.em_abs).count());
    let f1_ctr = 100.0 * order_free_mean(&scores.iter().map(|s| s.f1_chr).collect::<Vec<_>>());
    let f1_atr = 100.0 * order_free_mean(&scores.iter().map(|s| s.f1_abs).collect::<Vec<_>>());

    let mut per_entity: BTreeMap<EntityType, Tally> = BTreeMap::new();
    let mut per_language: BTreeMap<String, Tally> = BTreeMap::new();
    let mut total = Tally::default();
    for s in &scores {
        for t in [
            &mut total,
            per_entity.entry(s.entity).or_default(),
            per_language.entry(s.language.clone()).or_default(),
        ] {
            t.count += 1;
            t.consistent += usize::from(s.consistent);
            t.consistent_fact += usize::from(s.consistent_fact);
        }
    }
    let overall = total.breakdown();
    Ok(EvalReport {
        em_ctr,
        em_atr,
        f1_ctr,
        f1_atr,
        dev_em: em_atr - em_ctr,
        dev_f1: f1_atr - f1_ctr,
        trc: overall.trc,
        trcf: overall.trcf,
        per_entity: per_entity.iter().map(|(k, t)| (*k, t.breakdown())).collect(),
        per_language: per_language
            .iter()
            .map(|(k, t)| (k.clone(), t.breakdown()))
            .collect(),
        m,
    })
}

/// One collected answer, as stored in a responses JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub instance_id: String,
    pub reference_kind: ReferenceKind,
    pub answer: String,
    #[serde(default)]
    pub raw_completion: String,
}

/// Join per-query response records into per-instance pairs, in first-seen order.
pub fn pair_responses(records: &[ResponseRecord]) -> Result<Vec<ResponsePair>, MetricError> {
    let mut order: Vec<&str> = Vec::new();
    let mut arms: HashMap<&str, (Option<&str>, Option<&str>)> = HashMap::new();
    for r in records {
        let entry = arms.entry(r.instance_id.as_str()).or_insert_with(|| {
            order.push(r.instance_id.as_str());
            (None, None)
        });
        let slot = match r.reference_kind {
            ReferenceKind::Absolute => &mut entry.0,
            ReferenceKind::Chronological => &mut entry.1,
        };
        if slot.is_some() {
            return Err(MetricError::DuplicateResponse {
                id: r.instance_id.clone(),
                kind: r.reference_kind.as_str(),
            });
        }
        *slot = Some(r.answer.as_str());
    }
    order
        .into_iter()
        .map(|id| {
            let missing = |kind| MetricError::IncompleteResponsePair {
                id: id.to_string(),
                kind,
            };
            match arms[id] {
                (Some(a), Some(c)) => Ok(ResponsePair::new(id, a, c)),
                (None, _) => Err(missing("absolute")),
                (_, None) => Err(missing("chronological")),
            }
        })
        .collect()
}

/// Map instance id → gold answer.
pub fn gold_map(dataset: &[BenchmarkInstance]) -> HashMap<String, String> {
    dataset
        .iter()
        .map(|i| (i.id.clone(), i.answer.clone()))
        .collect()
}
