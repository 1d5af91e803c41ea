//! Paired query construction.
//!
//! From one event-event source record this builds the chronological query
//! (reference = an event), the absolute query (reference = that event's
//! boundary time), the gold answer and the two `because ...` reasoning
//! pathways. Batch building, consistency-pair sampling and seeded
//! subsampling live here as well.

use std::ops::Range;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io;
use crate::kb::{neighbor_fact, parse_fact_context, KbError, TemporalFact, Timeline, TimePoint};
use crate::relation::{Direction, EntityType, RelationError, RelationSpec, RelationTable};

const SUBJECT_SLOT: &str = "<subject>";
const OBJECT_SLOT: &str = "<object>";
const DIRECTION_SLOT: &str = "<direction>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("template slot {0} cannot be filled from an empty value")]
    SlotUnresolved(&'static str),
    #[error("template `{0}` must contain <subject>, <direction> and <object> exactly once")]
    InvalidTemplate(String),
    #[error("reference event not found for query `{0}`")]
    ReferenceEventNotFound(String),
    #[error("anchor `{0}` is ongoing and has no `to` time")]
    MissingToTime(String),
    #[error("answer fact is not the anchor's immediate neighbour")]
    NeighborMismatch,
    #[error("cannot find a before/after reference in question `{0}`")]
    UnparsableQuestion(String),
    #[error("gold answer `{gold}` is not adjacent to the reference (neighbour is `{neighbor}`)")]
    AnswerMismatch { gold: String, neighbor: String },
    #[error("requested {requested} samples from {available} instances")]
    SampleTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Relation(#[from] RelationErrorMessage),
}

/// Cloneable wrapper so [`QueryError`] can stay `Clone`.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct RelationErrorMessage(pub String);

impl From<RelationError> for QueryError {
    fn from(e: RelationError) -> Self {
        QueryError::Relation(RelationErrorMessage(e.to_string()))
    }
}

impl QueryError {
    /// Short machine-readable tag, used in skip logs.
    pub fn kind(&self) -> &'static str {
        match self {
            QueryError::SlotUnresolved(_) => "SlotUnresolved",
            QueryError::InvalidTemplate(_) => "InvalidTemplate",
            QueryError::ReferenceEventNotFound(_) => "ReferenceEventNotFound",
            QueryError::MissingToTime(_) => "MissingToTime",
            QueryError::NeighborMismatch => "NeighborMismatch",
            QueryError::UnparsableQuestion(_) => "UnparsableQuestion",
            QueryError::AnswerMismatch { .. } => "AnswerMismatch",
            QueryError::SampleTooLarge { .. } => "SampleTooLarge",
            QueryError::Kb(KbError::NoNeighbor { .. }) => "NoNeighbor",
            QueryError::Kb(_) => "FactContext",
            QueryError::Relation(_) => "UnknownRelation",
        }
    }
}

/// A query pattern with `<subject>`, `<direction>` and `<object>` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub relation: String,
    pub pattern: String,
    pub expected_entity_type: EntityType,
}

impl QueryTemplate {
    pub fn new(
        relation: impl Into<String>,
        pattern: impl Into<String>,
        expected_entity_type: EntityType,
    ) -> Result<Self, QueryError> {
        let pattern = pattern.into();
        let once = |slot| pattern.matches(slot).count() == 1;
        if !(once(SUBJECT_SLOT) && once(OBJECT_SLOT) && once(DIRECTION_SLOT)) {
            return Err(QueryError::InvalidTemplate(pattern));
        }
        Ok(Self {
            relation: relation.into(),
            pattern,
            expected_entity_type,
        })
    }

    pub fn for_relation(spec: &RelationSpec) -> Result<Self, QueryError> {
        Self::new(spec.name.clone(), spec.template.clone(), spec.entity_type)
    }

    /// Substitute the three slots verbatim.
    pub fn render(&self, subject: &str, direction: &str, object: &str) -> String {
        self.pattern
            .replacen(SUBJECT_SLOT, subject, 1)
            .replacen(DIRECTION_SLOT, direction, 1)
            .replacen(OBJECT_SLOT, object, 1)
    }
}

/// Fill a template into a chronological query: `... right before <event>?`.
pub fn make_chronological_query(
    template: &QueryTemplate,
    subject: &str,
    reference_event: &str,
    direction: Direction,
) -> Result<String, QueryError> {
    let subject = subject.trim();
    let reference_event = reference_event.trim();
    if subject.is_empty() {
        return Err(QueryError::SlotUnresolved(SUBJECT_SLOT));
    }
    if reference_event.is_empty() {
        return Err(QueryError::SlotUnresolved(OBJECT_SLOT));
    }
    Ok(template.render(subject, direction.restricted(), reference_event))
}

/// Byte range of the reference (event or time) following `right before` /
/// `right after` in a generated query, excluding the final `?`.
pub fn reference_span(query: &str, direction: Direction) -> Option<Range<usize>> {
    let marker = format!("{} ", direction.restricted());
    let start = query.rfind(&marker)? + marker.len();
    let rest = &query[start..];
    let trimmed = rest.trim_end().trim_end_matches('?').trim_end();
    if trimmed.is_empty() {
        return None;
    }
    Some(start..start + trimmed.len())
}

fn boundary_time(anchor: &TemporalFact, direction: Direction) -> Result<TimePoint, QueryError> {
    match direction {
        Direction::Before => Ok(anchor.from),
        Direction::After => anchor
            .to
            .ok_or_else(|| QueryError::MissingToTime(anchor.object.clone())),
    }
}

fn absolute_from_anchor(
    chronological_query: &str,
    span: Range<usize>,
    anchor: &TemporalFact,
    direction: Direction,
) -> Result<String, QueryError> {
    let time = boundary_time(anchor, direction)?;
    Ok(format!(
        "{}{}{}",
        &chronological_query[..span.start],
        time,
        &chronological_query[span.end..]
    ))
}

/// Replace the reference event of a chronological query with the event's
/// `from` time (before) or `to` time (after).
pub fn make_absolute_query(
    chronological_query: &str,
    timeline: &Timeline,
    direction: Direction,
) -> Result<String, QueryError> {
    let not_found = || QueryError::ReferenceEventNotFound(chronological_query.to_string());
    let span = reference_span(chronological_query, direction).ok_or_else(not_found)?;
    let anchor_index = *timeline
        .find_event(&chronological_query[span.clone()])
        .first()
        .ok_or_else(not_found)?;
    absolute_from_anchor(
        chronological_query,
        span,
        &timeline.facts()[anchor_index],
        direction,
    )
}

/// The two reasoning pathways of an instance, fully lowercased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pathways {
    pub time_oriented: String,
    pub event_oriented: String,
}

/// `because <anchor with dates>, and right <dir> <reference>, <answer fact>.`
///
/// The time-oriented pathway references the anchor's boundary time, the
/// event-oriented one the anchor's event name.
pub fn build_pathways(
    timeline: &Timeline,
    relation: &RelationSpec,
    anchor: &TemporalFact,
    answer_fact: &TemporalFact,
    direction: Direction,
) -> Result<Pathways, QueryError> {
    let anchor_index = timeline
        .index_of(anchor)
        .ok_or(QueryError::NeighborMismatch)?;
    match neighbor_fact(timeline, anchor_index, direction) {
        Ok(n) if n == answer_fact => {}
        _ => return Err(QueryError::NeighborMismatch),
    }
    let time = boundary_time(anchor, direction)?;
    let render = |reference: &str| {
        format!(
            "because {}, and {} {}, {}.",
            anchor.dated_clause(relation),
            direction.restricted(),
            reference,
            answer_fact.clause(relation)
        )
        .to_lowercase()
    };
    Ok(Pathways {
        time_oriented: render(&time.to_string()),
        event_oriented: render(&anchor.object),
    })
}

/// Which query of an instance is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Absolute,
    Chronological,
}

impl ReferenceKind {
    pub const BOTH: [ReferenceKind; 2] = [ReferenceKind::Absolute, ReferenceKind::Chronological];

    pub fn as_str(self) -> &'static str {
        match self {
            ReferenceKind::Absolute => "absolute",
            ReferenceKind::Chronological => "chronological",
        }
    }
}

/// One paired-query benchmark record. Field order is the JSONL field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub id: String,
    pub language: String,
    pub relation: String,
    pub entity_type: EntityType,
    pub direction: Direction,
    pub query_absolute: String,
    pub query_chronological: String,
    pub answer: String,
    pub pathway_time_oriented: String,
    pub pathway_event_oriented: String,
    pub fact_context: String,
}

impl BenchmarkInstance {
    pub fn query(&self, kind: ReferenceKind) -> &str {
        match kind {
            ReferenceKind::Absolute => &self.query_absolute,
            ReferenceKind::Chronological => &self.query_chronological,
        }
    }

    /// Pathway aligned with a query under cross pairing: absolute queries take
    /// the event-oriented pathway, chronological queries the time-oriented one.
    pub fn aligned_pathway(&self, kind: ReferenceKind) -> &str {
        match kind {
            ReferenceKind::Absolute => &self.pathway_event_oriented,
            ReferenceKind::Chronological => &self.pathway_time_oriented,
        }
    }
}

/// An event-event source record.
///
/// The gold answer is read from `answer`, or from the first entry of
/// `text_answers.text` for records in the upstream layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawL3Record")]
pub struct L3Record {
    pub id: Option<String>,
    pub question: String,
    pub subject: String,
    pub relation: String,
    pub fact_context: String,
    pub answer: String,
}

#[derive(Deserialize)]
struct RawL3Record {
    #[serde(default)]
    id: Option<serde_json::Value>,
    question: String,
    subject: String,
    relation: String,
    fact_context: String,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    text_answers: Option<TextAnswers>,
}

#[derive(Deserialize)]
struct TextAnswers {
    text: Vec<String>,
}

impl TryFrom<RawL3Record> for L3Record {
    type Error = String;

    fn try_from(raw: RawL3Record) -> Result<Self, Self::Error> {
        let answer = raw
            .answer
            .or_else(|| raw.text_answers.and_then(|t| t.text.into_iter().next()))
            .ok_or("record has neither `answer` nor `text_answers.text`")?;
        let id = raw.id.map(|v| match v {
            serde_json::Value::String(s) => s,
            other => other.to_string(),
        });
        Ok(Self {
            id,
            question: raw.question,
            subject: raw.subject,
            relation: raw.relation,
            fact_context: raw.fact_context,
            answer,
        })
    }
}

impl L3Record {
    /// Source id, or a content digest when the record has none.
    pub fn instance_id(&self) -> String {
        match &self.id {
            Some(id) => id.clone(),
            None => io::digest_bytes(format!(
                "{}\u{1f}{}\u{1f}{}\u{1f}{}",
                self.question, self.subject, self.relation, self.fact_context
            ))[..16]
                .to_string(),
        }
    }
}

/// Find the direction keyword and reference event in a source question.
pub fn parse_l3_question(question: &str, subject: &str) -> Result<(Direction, String), QueryError> {
    let unparsable = || QueryError::UnparsableQuestion(question.to_string());
    // ASCII folding keeps byte offsets valid in the original string.
    let lower = question.to_ascii_lowercase();
    let search_from = lower
        .find(&subject.trim().to_ascii_lowercase())
        .map(|i| i + subject.trim().len())
        .unwrap_or(0);
    let rest = &lower[search_from..];
    let hit = [Direction::Before, Direction::After]
        .into_iter()
        .filter_map(|d| rest.find(&format!(" {} ", d.keyword())).map(|at| (at, d)))
        .min_by_key(|(at, _)| *at)
        .ok_or_else(unparsable)?;
    let (at, direction) = hit;
    let start = search_from + at + direction.keyword().len() + 2;
    let reference = question[start..]
        .trim()
        .trim_end_matches(['?', '.'])
        .trim();
    if reference.is_empty() {
        return Err(unparsable());
    }
    Ok((direction, reference.to_string()))
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("instance {id}: {source}")]
pub struct InstanceError {
    pub id: String,
    pub source: QueryError,
}

fn same_answer(a: &str, b: &str) -> bool {
    let fold = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    fold(a) == fold(b)
}

/// Build one instance from an English event-event record.
pub fn build_instance(
    record: &L3Record,
    table: &RelationTable,
) -> Result<BenchmarkInstance, InstanceError> {
    let id = record.instance_id();
    build_instance_inner(record, table, &id).map_err(|source| InstanceError { id, source })
}

fn build_instance_inner(
    record: &L3Record,
    table: &RelationTable,
    id: &str,
) -> Result<BenchmarkInstance, QueryError> {
    let spec = table.lookup(&record.relation)?;
    let template = QueryTemplate::for_relation(spec)?;
    let (direction, reference) = parse_l3_question(&record.question, &record.subject)?;
    let timeline = parse_fact_context(&record.fact_context, &record.subject, spec)?;

    let candidates = timeline.find_event(&reference);
    if candidates.is_empty() {
        return Err(QueryError::ReferenceEventNotFound(record.question.clone()));
    }
    // An event can occur more than once on a timeline; pick the occurrence
    // whose neighbour is the gold answer.
    let mut first_err = None;
    let mut chosen = None;
    for &i in &candidates {
        match neighbor_fact(&timeline, i, direction) {
            Ok(n) if same_answer(&n.object, &record.answer) => {
                chosen = Some((i, n));
                break;
            }
            Ok(n) => {
                first_err.get_or_insert(QueryError::AnswerMismatch {
                    gold: record.answer.clone(),
                    neighbor: n.object.clone(),
                });
            }
            Err(e) => {
                first_err.get_or_insert(e.into());
            }
        }
    }
    let Some((anchor_index, answer_fact)) = chosen else {
        return Err(first_err.unwrap_or(QueryError::NeighborMismatch));
    };
    let anchor = &timeline.facts()[anchor_index];

    let query_chronological =
        make_chronological_query(&template, &record.subject, &reference, direction)?;
    let span = reference_span(&query_chronological, direction)
        .ok_or_else(|| QueryError::ReferenceEventNotFound(query_chronological.clone()))?;
    let query_absolute = absolute_from_anchor(&query_chronological, span, anchor, direction)?;
    let pathways = build_pathways(&timeline, spec, anchor, answer_fact, direction)?;

    Ok(BenchmarkInstance {
        id: id.to_string(),
        language: "en".to_string(),
        relation: spec.name.clone(),
        entity_type: spec.entity_type,
        direction,
        query_absolute,
        query_chronological,
        answer: answer_fact.object.clone(),
        pathway_time_oriented: pathways.time_oriented,
        pathway_event_oriented: pathways.event_oriented,
        fact_context: record.fact_context.clone(),
    })
}

/// A record that did not yield an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOutput {
    pub instances: Vec<BenchmarkInstance>,
    pub skipped: Vec<SkipEntry>,
}

/// Build instances for a batch of records in parallel. Output keeps source
/// order; records that fail are listed in `skipped`.
pub fn build_dataset(records: &[L3Record], table: &RelationTable) -> BuildOutput {
    let results: Vec<_> = records
        .par_iter()
        .map(|r| build_instance(r, table))
        .collect();
    let mut out = BuildOutput::default();
    for result in results {
        match result {
            Ok(instance) => out.instances.push(instance),
            Err(e) => out.skipped.push(SkipEntry {
                id: e.id,
                reason: format!("{}: {}", e.source.kind(), e.source),
            }),
        }
    }
    out
}

/// A binary consistency-task example. `label` is true iff both queries come
/// from the same instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyPair {
    pub query_a: String,
    pub query_b: String,
    pub label: bool,
    pub id_a: String,
    pub id_b: String,
}

/// Sample `n` instances; for each emit a positive pair (its absolute and
/// chronological queries) and an antagonist pair (its absolute query with the
/// chronological query of another randomly chosen instance).
pub fn build_consistency_pairs(
    instances: &[BenchmarkInstance],
    n: usize,
    seed: u64,
) -> Result<Vec<ConsistencyPair>, QueryError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if n > instances.len() || instances.len() < 2 {
        return Err(QueryError::SampleTooLarge {
            requested: n,
            available: instances.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, instances.len(), n).into_vec();
    let mut pairs = Vec::with_capacity(2 * n);
    for i in picked {
        let inst = &instances[i];
        let mut j = rng.gen_range(0..instances.len() - 1);
        if j >= i {
            j += 1;
        }
        let other = &instances[j];
        pairs.push(ConsistencyPair {
            query_a: inst.query_absolute.clone(),
            query_b: inst.query_chronological.clone(),
            label: true,
            id_a: inst.id.clone(),
            id_b: inst.id.clone(),
        });
        pairs.push(ConsistencyPair {
            query_a: inst.query_absolute.clone(),
            query_b: other.query_chronological.clone(),
            label: false,
            id_a: inst.id.clone(),
            id_b: other.id.clone(),
        });
    }
    Ok(pairs)
}

/// Seeded sample of `n` instances, kept in source order.
pub fn subsample(
    instances: &[BenchmarkInstance],
    n: usize,
    seed: u64,
) -> Result<Vec<BenchmarkInstance>, QueryError> {
    if n > instances.len() {
        return Err(QueryError::SampleTooLarge {
            requested: n,
            available: instances.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, instances.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| instances[i].clone()).collect())
}
