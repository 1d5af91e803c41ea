//! Agreement metrics for machine-translated benchmark text: chrF++, BLEU-n,
//! and a translation success rate backed by a pluggable language detector.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranslationError {
    #[error("no language profile for `{0}`")]
    ProfileMissing(String),
    #[error("{hyps} hypotheses but {refs} references")]
    LengthMismatch { hyps: usize, refs: usize },
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub char_order: usize,
    pub word_order: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        Self {
            char_order: 6,
            word_order: 2,
            beta: 2.0,
        }
    }
}

fn count_ngrams<T: Clone + Eq + std::hash::Hash>(items: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut out = HashMap::new();
    if n == 0 || items.len() < n {
        return out;
    }
    for w in items.windows(n) {
        *out.entry(w.to_vec()).or_insert(0) += 1;
    }
    out
}

/// (hypothesis total, reference total, clipped matches)
fn match_stats<K: Eq + std::hash::Hash>(
    hyp: &HashMap<K, usize>,
    reference: &HashMap<K, usize>,
) -> (usize, usize, usize) {
    let hyp_total: usize = hyp.values().sum();
    let ref_total: usize = reference.values().sum();
    let matched = hyp
        .iter()
        .map(|(k, c)| (*c).min(reference.get(k).copied().unwrap_or(0)))
        .sum();
    (if ref_total == 0 { 0 } else { hyp_total }, ref_total, matched)
}

const PUNCT: &str = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

/// Whitespace tokens with one leading or trailing ASCII punctuation mark
/// split off (only one side per token, trailing first).
fn chrf_words(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        if w.chars().count() == 1 {
            out.push(w);
            continue;
        }
        let last = w.chars().next_back().expect("non-empty token");
        let first = w.chars().next().expect("non-empty token");
        if PUNCT.contains(last) {
            let cut = w.len() - last.len_utf8();
            out.push(&w[..cut]);
            out.push(&w[cut..]);
        } else if PUNCT.contains(first) {
            let cut = first.len_utf8();
            out.push(&w[..cut]);
            out.push(&w[cut..]);
        } else {
            out.push(w);
        }
    }
    out
}

/// Sentence-level chrF++ on a 0..100 scale.
///
/// Character n-grams ignore whitespace; word n-grams use whitespace tokens.
/// Precision and recall are averaged over the orders where both sides have
/// n-grams, then combined with F-beta.
pub fn chrf_pp(hyp: &str, reference: &str, config: &ChrfConfig) -> f64 {
    let hyp_blank = hyp.trim().is_empty();
    let ref_blank = reference.trim().is_empty();
    if hyp_blank && ref_blank {
        return 100.0;
    }
    if hyp_blank || ref_blank {
        return 0.0;
    }
    let hyp_chars: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let ref_chars: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hyp_words = chrf_words(hyp);
    let ref_words = chrf_words(reference);

    let mut stats = Vec::with_capacity(config.char_order + config.word_order);
    for n in 1..=config.char_order {
        stats.push(match_stats(
            &count_ngrams(&hyp_chars, n),
            &count_ngrams(&ref_chars, n),
        ));
    }
    for n in 1..=config.word_order {
        stats.push(match_stats(
            &count_ngrams(&hyp_words, n),
            &count_ngrams(&ref_words, n),
        ));
    }

    let (mut prec, mut rec, mut effective) = (0.0, 0.0, 0usize);
    for (h, r, m) in stats {
        if h > 0 && r > 0 {
            prec += m as f64 / h as f64;
            rec += m as f64 / r as f64;
            effective += 1;
        }
    }
    if effective == 0 {
        return 0.0;
    }
    prec /= effective as f64;
    rec /= effective as f64;
    if prec + rec == 0.0 {
        return 0.0;
    }
    let b2 = config.beta * config.beta;
    100.0 * (1.0 + b2) * prec * rec / (b2 * prec + rec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// Add one to numerator and denominator for orders two and up.
    #[default]
    AddOne,
}

/// Sentence-level BLEU over whitespace tokens, 0..100 scale.
pub fn bleu_n(hyp: &str, reference: &str, max_order: usize, smoothing: Smoothing) -> f64 {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if h.is_empty() && r.is_empty() {
        return 100.0;
    }
    if h.is_empty() || r.is_empty() || max_order == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_order {
        let hc = count_ngrams(&h, n);
        let rc = count_ngrams(&r, n);
        let total: usize = hc.values().sum();
        let matched: usize = hc
            .iter()
            .map(|(k, c)| (*c).min(rc.get(k).copied().unwrap_or(0)))
            .sum();
        let p = match smoothing {
            Smoothing::AddOne if n >= 2 => (matched as f64 + 1.0) / (total as f64 + 1.0),
            _ if total == 0 => 0.0,
            _ => matched as f64 / total as f64,
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let c = h.len() as f64;
    let rl = r.len() as f64;
    let bp = if c < rl { (1.0 - rl / c).exp() } else { 1.0 };
    100.0 * bp * (log_sum / max_order as f64).exp()
}

fn trigrams(text: &str) -> Vec<String> {
    let squeezed = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    let padded: Vec<char> = format!(" {squeezed} ").chars().collect();
    padded.windows(3).map(|w| w.iter().collect()).collect()
}

/// Relative character-trigram frequencies for one language.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub language: String,
    pub frequencies: BTreeMap<String, f64>,
}

impl LanguageProfile {
    pub fn from_corpus<S: AsRef<str>>(language: &str, texts: &[S]) -> Self {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for t in texts {
            for g in trigrams(t.as_ref()) {
                *counts.entry(g).or_insert(0.0) += 1.0;
            }
        }
        let total: f64 = counts.values().sum();
        if total > 0.0 {
            counts.values_mut().for_each(|v| *v /= total);
        }
        Self {
            language: language.to_string(),
            frequencies: counts,
        }
    }

    fn cosine(&self, other: &BTreeMap<String, f64>) -> f64 {
        let dot: f64 = other
            .iter()
            .filter_map(|(g, w)| self.frequencies.get(g).map(|f| f * w))
            .sum();
        let a = self.frequencies.values().map(|f| f * f).sum::<f64>().sqrt();
        let b = other.values().map(|f| f * f).sum::<f64>().sqrt();
        if a == 0.0 || b == 0.0 {
            0.0
        } else {
            dot / (a * b)
        }
    }
}

pub trait LanguageDetector: Send + Sync {
    /// Best-guess language code, or `None` when nothing can be said.
    fn detect(&self, text: &str) -> Option<String>;
    fn supports(&self, language: &str) -> bool;
}

/// Nearest trigram profile by cosine similarity; ties go to the
/// alphabetically first language.
#[derive(Debug, Clone, Default)]
pub struct TrigramDetector {
    profiles: BTreeMap<String, LanguageProfile>,
}

impl TrigramDetector {
    pub fn new(profiles: impl IntoIterator<Item = LanguageProfile>) -> Self {
        Self {
            profiles: profiles
                .into_iter()
                .map(|p| (p.language.clone(), p))
                .collect(),
        }
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

impl LanguageDetector for TrigramDetector {
    fn detect(&self, text: &str) -> Option<String> {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for g in trigrams(text) {
            *counts.entry(g).or_insert(0.0) += 1.0;
        }
        let mut best: Option<(&str, f64)> = None;
        for (lang, profile) in &self.profiles {
            let s = profile.cosine(&counts);
            if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
                best = Some((lang, s));
            }
        }
        best.map(|(l, _)| l.to_string())
    }

    fn supports(&self, language: &str) -> bool {
        self.profiles.contains_key(language)
    }
}

/// Percentage of `outputs` detected as `expected`.
pub fn translation_success_rate<S: AsRef<str>>(
    outputs: &[S],
    expected: &str,
    detector: &dyn LanguageDetector,
) -> Result<f64, TranslationError> {
    if !detector.supports(expected) {
        return Err(TranslationError::ProfileMissing(expected.to_string()));
    }
    if outputs.is_empty() {
        return Err(TranslationError::EmptyInput);
    }
    let hits = outputs
        .iter()
        .filter(|o| detector.detect(o.as_ref()).as_deref() == Some(expected))
        .count();
    Ok(100.0 * hits as f64 / outputs.len() as f64)
}

/// Load profiles from a directory: `<lang>.json` holds a serialized
/// profile, `<lang>.txt` is a plain-text corpus (one text per line).
pub fn load_profiles(dir: &Path) -> Result<Vec<LanguageProfile>, IoError> {
    let listing = fs::read_dir(dir).map_err(|source| IoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<_> = listing.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let Some(lang) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => out.push(io::read_json(&path)?),
            Some("txt") => out.push(LanguageProfile::from_corpus(lang, &io::read_lines(&path)?)),
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtAgreeSummary {
    pub chrf_pp_mean: f64,
    pub bleu_n_mean: f64,
    pub tsr: Option<f64>,
    pub count: usize,
}

/// Mean chrF++ and BLEU-n over aligned pairs, plus TSR when a detector and
/// expected language are given.
pub fn mt_agreement<S: AsRef<str>>(
    hyps: &[S],
    refs: &[S],
    chrf: &ChrfConfig,
    max_order: usize,
    language_check: Option<(&dyn LanguageDetector, &str)>,
) -> Result<MtAgreeSummary, TranslationError> {
    if hyps.len() != refs.len() {
        return Err(TranslationError::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(TranslationError::EmptyInput);
    }
    let n = hyps.len() as f64;
    let (mut c, mut b) = (0.0, 0.0);
    for (h, r) in hyps.iter().zip(refs) {
        c += chrf_pp(h.as_ref(), r.as_ref(), chrf);
        b += bleu_n(h.as_ref(), r.as_ref(), max_order, Smoothing::AddOne);
    }
    let tsr = match language_check {
        Some((detector, lang)) => Some(translation_success_rate(hyps, lang, detector)?),
        None => None,
    };
    Ok(MtAgreeSummary {
        chrf_pp_mean: c / n,
        bleu_n_mean: b / n,
        tsr,
        count: hyps.len(),
    })
}
