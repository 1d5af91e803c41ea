//! Evaluation prompts (zero-shot, ICL, semantic ICL, semantic CoT) and
//! instruction-tuning record export.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io;
use crate::query::{BenchmarkInstance, ReferenceKind};
use crate::similarity::TfIdfIndex;

pub const DEFAULT_SHOTS: usize = 3;

pub const DEFAULT_SFT_INSTRUCTION: &str =
    "Answer the temporal question. First state the reasoning, then give the answer on its own line.";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("demonstration pool has {available} entries, {needed} needed")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("unilateral pairing only covers absolute queries")]
    PairingViolation,
    #[error("unknown prompt style `{0}`")]
    UnknownStyle(String),
    #[error("unknown pairing `{0}`")]
    UnknownPairing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    ZeroShot,
    Icl,
    SemanticIcl,
    SemanticCot,
}

impl PromptKind {
    pub fn is_semantic(self) -> bool {
        matches!(self, PromptKind::SemanticIcl | PromptKind::SemanticCot)
    }
}

impl FromStr for PromptKind {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "zero" | "zero-shot" => Ok(PromptKind::ZeroShot),
            "icl" => Ok(PromptKind::Icl),
            "semantic-icl" => Ok(PromptKind::SemanticIcl),
            "semantic-cot" | "cot" => Ok(PromptKind::SemanticCot),
            _ => Err(PromptError::UnknownStyle(s.to_string())),
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::ZeroShot => "zero",
            PromptKind::Icl => "icl",
            PromptKind::SemanticIcl => "semantic-icl",
            PromptKind::SemanticCot => "semantic-cot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptStyle {
    pub kind: PromptKind,
    pub shots: usize,
}

impl PromptStyle {
    /// Zero-shot always has zero shots, whatever was asked for.
    pub fn new(kind: PromptKind, shots: usize) -> Self {
        let shots = if kind == PromptKind::ZeroShot { 0 } else { shots };
        Self { kind, shots }
    }

    pub fn zero_shot() -> Self {
        Self::new(PromptKind::ZeroShot, 0)
    }

    pub fn icl(shots: usize) -> Self {
        Self::new(PromptKind::Icl, shots)
    }

    pub fn semantic_icl(shots: usize) -> Self {
        Self::new(PromptKind::SemanticIcl, shots)
    }

    pub fn semantic_cot(shots: usize) -> Self {
        Self::new(PromptKind::SemanticCot, shots)
    }
}

/// Per-query RNG: the caller's seed mixed with a digest of the query text.
fn query_rng(query: &str, seed: u64) -> ChaCha8Rng {
    let digest = io::digest_bytes(query);
    let salt = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

/// A demonstration pool for one language and reference kind, with its IDF
/// table computed once.
#[derive(Debug, Clone)]
pub struct DemoPool<'a> {
    kind: ReferenceKind,
    instances: Vec<&'a BenchmarkInstance>,
    index: TfIdfIndex,
}

impl<'a> DemoPool<'a> {
    /// Pool over all of `instances`, matching on their `kind` query.
    pub fn new(instances: &'a [BenchmarkInstance], kind: ReferenceKind) -> Self {
        Self::from_refs(instances.iter().collect(), kind)
    }

    /// Pool restricted to one language.
    pub fn for_language(
        instances: &'a [BenchmarkInstance],
        language: &str,
        kind: ReferenceKind,
    ) -> Self {
        Self::from_refs(
            instances.iter().filter(|i| i.language == language).collect(),
            kind,
        )
    }

    fn from_refs(instances: Vec<&'a BenchmarkInstance>, kind: ReferenceKind) -> Self {
        let docs: Vec<&str> = instances.iter().map(|i| i.query(kind)).collect();
        let index = TfIdfIndex::new(&docs);
        Self {
            kind,
            instances,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn kind(&self) -> ReferenceKind {
        self.kind
    }

    /// Pick `style.shots` demonstrations for `query`.
    pub fn select(
        &self,
        query: &str,
        style: PromptStyle,
        seed: u64,
    ) -> Result<Vec<&'a BenchmarkInstance>, PromptError> {
        self.select_excluding(query, style, seed, None)
    }

    /// Like [`DemoPool::select`], skipping the pool entry whose id is `exclude`
    /// so a target never serves as its own demonstration.
    pub fn select_excluding(
        &self,
        query: &str,
        style: PromptStyle,
        seed: u64,
        exclude: Option<&str>,
    ) -> Result<Vec<&'a BenchmarkInstance>, PromptError> {
        if style.shots == 0 {
            return Ok(Vec::new());
        }
        let candidates: Vec<usize> = (0..self.len())
            .filter(|&i| Some(self.instances[i].id.as_str()) != exclude)
            .collect();
        if candidates.len() < style.shots {
            return Err(PromptError::PoolTooSmall {
                needed: style.shots,
                available: candidates.len(),
            });
        }
        let picked: Vec<usize> = match style.kind {
            PromptKind::ZeroShot => Vec::new(),
            PromptKind::Icl => {
                let mut rng = query_rng(query, seed);
                index::sample(&mut rng, candidates.len(), style.shots)
                    .into_iter()
                    .map(|i| candidates[i])
                    .collect()
            }
            PromptKind::SemanticIcl | PromptKind::SemanticCot => self
                .index
                .top_k(query, self.len())
                .into_iter()
                .filter(|i| candidates.binary_search(i).is_ok())
                .take(style.shots)
                .collect(),
        };
        Ok(picked.into_iter().map(|i| self.instances[i]).collect())
    }
}

/// Choose demonstrations from `pool` (already restricted to the query's
/// language) by comparing against each instance's `kind` query.
pub fn select_demonstrations<'a>(
    pool: &'a [BenchmarkInstance],
    query: &str,
    kind: ReferenceKind,
    style: PromptStyle,
    seed: u64,
) -> Result<Vec<&'a BenchmarkInstance>, PromptError> {
    DemoPool::new(pool, kind).select(query, style, seed)
}

/// Render question/answer demonstration blocks followed by the target query.
///
/// Semantic CoT blocks carry the demonstration's aligned pathway (time-oriented
/// for chronological queries, event-oriented for absolute ones) between the
/// question and the answer.
pub fn render_prompt(
    query: &str,
    demos: &[&BenchmarkInstance],
    style: PromptStyle,
    kind: ReferenceKind,
) -> String {
    let cot = style.kind == PromptKind::SemanticCot;
    let mut out = String::new();
    for demo in demos {
        out.push_str(&format!("Question: {}\n", demo.query(kind)));
        if cot {
            out.push_str(&format!("Reasoning: {}\n", demo.aligned_pathway(kind)));
        }
        out.push_str(&format!("Answer: {}\n\n", demo.answer));
    }
    out.push_str(&format!("Question: {query}\n"));
    out.push_str(if cot { "Reasoning:" } else { "Answer:" });
    out
}

/// One prompt ready for collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub instance_id: String,
    pub reference_kind: ReferenceKind,
    pub prompt: String,
}

/// Prompts for both queries of every instance in `targets`, drawing
/// demonstrations of the same language and reference kind from `pool`.
pub fn build_prompts(
    targets: &[BenchmarkInstance],
    pool: &[BenchmarkInstance],
    style: PromptStyle,
    seed: u64,
) -> Result<Vec<PromptRecord>, PromptError> {
    let mut pools: HashMap<(String, ReferenceKind), DemoPool<'_>> = HashMap::new();
    let mut out = Vec::with_capacity(targets.len() * 2);
    for target in targets {
        for kind in ReferenceKind::BOTH {
            let demo_pool = pools
                .entry((target.language.clone(), kind))
                .or_insert_with(|| DemoPool::for_language(pool, &target.language, kind));
            let query = target.query(kind);
            let demos = demo_pool.select_excluding(query, style, seed, Some(&target.id))?;
            out.push(PromptRecord {
                instance_id: target.id.clone(),
                reference_kind: kind,
                prompt: render_prompt(query, &demos, style, kind),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Absolute queries with the event-oriented pathway, chronological queries
    /// with the time-oriented pathway.
    Cross,
    /// Absolute queries only, with the event-oriented pathway.
    UnilateralAbsolute,
}

impl FromStr for Pairing {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cross" => Ok(Pairing::Cross),
            "unilateral" | "unilateral_absolute" => Ok(Pairing::UnilateralAbsolute),
            _ => Err(PromptError::UnknownPairing(s.to_string())),
        }
    }
}

/// Instruction-format training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub pairing: Pairing,
}

pub fn render_sft_record(
    instance: &BenchmarkInstance,
    kind: ReferenceKind,
    pairing: Pairing,
    instruction: &str,
) -> Result<SftRecord, PromptError> {
    if pairing == Pairing::UnilateralAbsolute && kind != ReferenceKind::Absolute {
        return Err(PromptError::PairingViolation);
    }
    Ok(SftRecord {
        instruction: instruction.to_string(),
        input: instance.query(kind).to_string(),
        output: format!(
            "{}\n{}",
            instance.aligned_pathway(kind),
            instance.answer.to_lowercase()
        ),
        pairing,
    })
}

/// Two records per instance under cross pairing, one under unilateral.
pub fn export_sft(
    dataset: &[BenchmarkInstance],
    pairing: Pairing,
    instruction: &str,
) -> Vec<SftRecord> {
    let kinds: &[ReferenceKind] = match pairing {
        Pairing::Cross => &ReferenceKind::BOTH,
        Pairing::UnilateralAbsolute => &[ReferenceKind::Absolute],
    };
    dataset
        .iter()
        .flat_map(|inst| {
            kinds.iter().map(move |&k| {
                render_sft_record(inst, k, pairing, instruction).expect("kinds match pairing")
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relation::{Direction, EntityType};

    fn inst(id: &str, qa: &str, qc: &str, ans: &str) -> BenchmarkInstance {
        BenchmarkInstance {
            id: id.into(),
            language: "en".into(),
            relation: "employer".into(),
            entity_type: EntityType::Employer,
            direction: Direction::Before,
            query_absolute: qa.into(),
            query_chronological: qc.into(),
            answer: ans.into(),
            pathway_time_oriented: format!("because time {ans}."),
            pathway_event_oriented: format!("because event {ans}."),
            fact_context: String::new(),
        }
    }

    fn pool() -> Vec<BenchmarkInstance> {
        vec![
            inst("p0", "Which team did A play for right before May 1990?", "Which team did A play for right before Red FC?", "Blue FC"),
            inst("p1", "Which employer did B work for right after June 2001?", "Which employer did B work for right after Acme?", "Initech"),
            inst("p2", "Who was the chair of C right before July 1999?", "Who was the chair of C right before Dana?", "Eve"),
            inst("p3", "Which school was D attending right after May 1970?", "Which school was D attending right after Eton?", "Oxford"),
            inst("p4", "Who was the owner of E right before March 1980?", "Who was the owner of E right before Frank?", "Gina"),
        ]
    }

    #[test]
    fn zero_shot_forces_zero() {
        assert_eq!(PromptStyle::new(PromptKind::ZeroShot, 3).shots, 0);
        let p = pool();
        let demos =
            select_demonstrations(&p, "q", ReferenceKind::Absolute, PromptStyle::icl(0), 1).unwrap();
        assert!(demos.is_empty());
        let prompt = render_prompt("Who?", &[], PromptStyle::zero_shot(), ReferenceKind::Absolute);
        assert_eq!(prompt, "Question: Who?\nAnswer:");
    }

    #[test]
    fn verbatim_query_ranks_first() {
        let p = pool();
        let q = p[3].query_chronological.clone();
        for style in [PromptStyle::semantic_icl(3), PromptStyle::semantic_cot(3)] {
            let demos =
                select_demonstrations(&p, &q, ReferenceKind::Chronological, style, 0).unwrap();
            assert_eq!(demos.len(), 3);
            assert_eq!(demos[0].id, "p3");
        }
    }

    #[test]
    fn icl_seeded_sample_is_frozen() {
        // Golden output of the seeded sampler for seed 7, recorded once.
        let p = pool();
        let q = "Which team did Z play for right before April 1960?";
        let ids = |seed| {
            select_demonstrations(&p, q, ReferenceKind::Absolute, PromptStyle::icl(3), seed)
                .unwrap()
                .iter()
                .map(|d| d.id.clone())
                .collect::<Vec<_>>()
        };
        let first = ids(7);
        assert_eq!(first, ICL_SEED7_GOLDEN);
        assert_eq!(first, ids(7));
        let mut unique = first.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 3);
    }

    const ICL_SEED7_GOLDEN: [&str; 3] = ["p0", "p4", "p2"];

    #[test]
    fn pool_too_small() {
        let p = pool();
        assert_eq!(
            select_demonstrations(&p, "q", ReferenceKind::Absolute, PromptStyle::icl(6), 0),
            Err(PromptError::PoolTooSmall { needed: 6, available: 5 })
        );
    }

    #[test]
    fn cot_prompt_uses_aligned_pathways() {
        let p = pool();
        let demos: Vec<&BenchmarkInstance> = p.iter().take(3).collect();
        let chrono = render_prompt("Q?", &demos, PromptStyle::semantic_cot(3), ReferenceKind::Chronological);
        assert_eq!(chrono.matches("Reasoning: because time").count(), 3);
        assert!(!chrono.contains("because event"));
        assert!(chrono.ends_with("Question: Q?\nReasoning:"));
        let abs = render_prompt("Q?", &demos, PromptStyle::semantic_cot(3), ReferenceKind::Absolute);
        assert_eq!(abs.matches("because event").count(), 3);
        let icl = render_prompt("Q?", &demos, PromptStyle::icl(3), ReferenceKind::Chronological);
        assert!(!icl.contains("because"));
        assert!(!icl.contains("Reasoning"));
        assert_eq!(icl.matches("Question: ").count(), 4);
    }

    #[test]
    fn sft_pairing_rules() {
        let i = &pool()[0];
        let cross_c = render_sft_record(i, ReferenceKind::Chronological, Pairing::Cross, "do it").unwrap();
        assert_eq!(cross_c.input, i.query_chronological);
        assert_eq!(cross_c.output, "because time Blue FC.\nblue fc");
        let cross_a = render_sft_record(i, ReferenceKind::Absolute, Pairing::Cross, "do it").unwrap();
        assert!(cross_a.output.starts_with("because event"));
        assert_eq!(
            render_sft_record(i, ReferenceKind::Chronological, Pairing::UnilateralAbsolute, "x"),
            Err(PromptError::PairingViolation)
        );
        let p = pool();
        assert_eq!(export_sft(&p, Pairing::Cross, "x").len(), 10);
        assert_eq!(export_sft(&p, Pairing::UnilateralAbsolute, "x").len(), 5);
        assert_eq!(
            serde_json::to_string(&Pairing::UnilateralAbsolute).unwrap(),
            "\"unilateral_absolute\""
        );
    }

    #[test]
    fn prompts_draw_same_language_demos() {
        let mut p = pool();
        let mut fr = inst("fr0", "Quelle équipe avant mai 1990 ?", "Quelle équipe avant Red FC ?", "Blue FC");
        fr.language = "fr".into();
        p.push(fr.clone());
        let mut fr2 = fr.clone();
        fr2.id = "fr1".into();
        p.push(fr2);
        let prompts = build_prompts(&[fr], &p, PromptStyle::semantic_icl(1), 0).unwrap();
        assert_eq!(prompts.len(), 2);
        for pr in &prompts {
            assert!(!pr.prompt.contains("Which"), "{}", pr.prompt);
        }
        let again = build_prompts(&p[..1], &p, PromptStyle::icl(3), 5).unwrap();
        assert_eq!(again, build_prompts(&p[..1], &p, PromptStyle::icl(3), 5).unwrap());
    }

    #[test]
    fn target_is_never_its_own_demo() {
        let p = pool();
        let prompts = build_prompts(&p[..1], &p, PromptStyle::semantic_icl(4), 0).unwrap();
        for pr in &prompts {
            assert_eq!(pr.prompt.matches("Red FC").count() + pr.prompt.matches("May 1990").count(), 1);
        }
        assert_eq!(
            build_prompts(&p[..1], &p, PromptStyle::icl(5), 0),
            Err(PromptError::PoolTooSmall { needed: 5, available: 4 })
        );
    }

    #[test]
    fn style_parsing() {
        assert_eq!("semantic-cot".parse::<PromptKind>().unwrap(), PromptKind::SemanticCot);
        assert_eq!("zero".parse::<PromptKind>().unwrap(), PromptKind::ZeroShot);
        assert!("few".parse::<PromptKind>().is_err());
        assert_eq!("unilateral".parse::<Pairing>().unwrap(), Pairing::UnilateralAbsolute);
    }
}
