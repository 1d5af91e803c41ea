//! Temporal fact contexts: month-granularity time points, dated
//! subject–relation–object facts, and chronologically ordered timelines with
//! adjacency lookup.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::relation::{Direction, RelationError, RelationSpec, RelationTable};

pub const MIN_YEAR: i32 = 634;
pub const MAX_YEAR: i32 = 2100;

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KbError {
    #[error("unknown month `{0}`")]
    UnknownMonth(String),
    #[error("malformed time expression `{0}`")]
    MalformedTimeExpression(String),
    #[error("year {0} outside accepted range {MIN_YEAR}-{MAX_YEAR}")]
    YearOutOfRange(i32),
    #[error("empty fact context")]
    EmptyContext,
    #[error("unparsable sentence #{index} at `{span}`: {reason}")]
    UnparsableSentence {
        index: usize,
        span: String,
        reason: String,
    },
    #[error("sentence #{index} has subject `{found}`, expected `{expected}`")]
    SubjectMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("fact interval ends before it starts: {from} > {to}")]
    InvalidInterval { from: TimePoint, to: TimePoint },
    #[error("fact has an empty {0}")]
    EmptyField(&'static str),
    #[error("anchor index {index} out of range for timeline of {len} facts")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no fact {direction} anchor #{index}")]
    NoNeighbor { index: usize, direction: Direction },
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimePoint {
    pub year: i32,
    pub month: u8,
}

impl TimePoint {
    pub fn new(year: i32, month: u8) -> Result<Self, KbError> {
        if !(1..=12).contains(&month) {
            return Err(KbError::MalformedTimeExpression(format!("month {month}")));
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&year) {
            return Err(KbError::YearOutOfRange(year));
        }
        Ok(Self { year, month })
    }

    pub fn month_name(self) -> &'static str {
        const NAMES: [&str; 12] = [
            "January",
            "February",
            "March",
            "April",
            "May",
            "June",
            "July",
            "August",
            "September",
            "October",
            "November",
            "December",
        ];
        NAMES[usize::from(self.month - 1)]
    }

    /// Months since year 0, handy for arithmetic on synthetic timelines.
    pub fn ordinal(self) -> i32 {
        self.year * 12 + i32::from(self.month) - 1
    }

    pub fn from_ordinal(ordinal: i32) -> Result<Self, KbError> {
        Self::new(ordinal.div_euclid(12), (ordinal.rem_euclid(12) + 1) as u8)
    }
}

impl fmt::Display for TimePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.month_name(), self.year)
    }
}

impl FromStr for TimePoint {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_time_point(s)
    }
}

fn month_number(token: &str) -> Option<u8> {
    let token = token.to_lowercase();
    MONTHS
        .iter()
        .position(|m| *m == token || (token.len() == 3 && m.starts_with(&token)))
        .map(|i| i as u8 + 1)
}

/// Parse `"<MonthName> <Year>"`, e.g. `"January 1949"`.
///
/// Month names are English and case-insensitive; three-letter abbreviations
/// with an optional trailing comma (`"Jan, 1949"`) are also accepted.
/// Day-level expressions are rejected.
pub fn parse_time_point(text: &str) -> Result<TimePoint, KbError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let malformed = || KbError::MalformedTimeExpression(tokens.join(" "));
    let [month, year] = tokens.as_slice() else {
        return Err(malformed());
    };
    let month = month.strip_suffix(',').unwrap_or(month);
    if month.is_empty() || month.chars().all(|c| c.is_ascii_digit()) {
        return Err(malformed());
    }
    let month = month_number(month).ok_or_else(|| KbError::UnknownMonth(month.to_string()))?;
    if year.is_empty() || !year.chars().all(|c| c.is_ascii_digit()) || year.len() > 5 {
        return Err(malformed());
    }
    let year: i32 = year.parse().map_err(|_| malformed())?;
    TimePoint::new(year, month)
}

/// A dated subject–relation–object fact. A missing `to` means ongoing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TemporalFact {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub from: TimePoint,
    pub to: Option<TimePoint>,
}

impl TemporalFact {
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
        from: TimePoint,
        to: Option<TimePoint>,
    ) -> Result<Self, KbError> {
        let fact = Self {
            subject: subject.into().trim().to_string(),
            relation: relation.into(),
            object: object.into().trim().to_string(),
            from,
            to,
        };
        if fact.subject.is_empty() {
            return Err(KbError::EmptyField("subject"));
        }
        if fact.object.is_empty() {
            return Err(KbError::EmptyField("object"));
        }
        if let Some(to) = to {
            if to < from {
                return Err(KbError::InvalidInterval { from, to });
            }
        }
        Ok(fact)
    }

    pub fn is_ongoing(&self) -> bool {
        self.to.is_none()
    }

    /// `"<subject> <phrase> <object>"`, no time information, no final period.
    pub fn clause(&self, relation: &RelationSpec) -> String {
        join_subject_phrase(&self.subject, relation.canonical_phrase(), &self.object)
    }

    /// The clause followed by `from <time>[ to <time>]`, no final period.
    pub fn dated_clause(&self, relation: &RelationSpec) -> String {
        let mut out = format!("{} from {}", self.clause(relation), self.from);
        if let Some(to) = self.to {
            out.push_str(&format!(" to {to}"));
        }
        out
    }

    /// Canonical fact sentence, as accepted by [`parse_fact_context`].
    pub fn sentence(&self, relation: &RelationSpec) -> String {
        format!("{}.", self.dated_clause(relation))
    }

    fn sort_key(&self, other: &Self) -> Ordering {
        let to_key = |t: Option<TimePoint>| (t.is_none(), t);
        self.from
            .cmp(&other.from)
            .then_with(|| to_key(self.to).cmp(&to_key(other.to)))
            .then_with(|| self.object.cmp(&other.object))
    }
}

fn join_subject_phrase(subject: &str, phrase: &str, object: &str) -> String {
    if phrase.starts_with('\'') {
        format!("{subject}{phrase} {object}")
    } else {
        format!("{subject} {phrase} {object}")
    }
}

/// All dated facts for one subject and relation, in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub subject: String,
    pub relation: String,
    facts: Vec<TemporalFact>,
}

impl Timeline {
    /// Sorts facts by `from`, then `to` (ongoing last), then object name.
    pub fn new(
        subject: impl Into<String>,
        relation: impl Into<String>,
        mut facts: Vec<TemporalFact>,
    ) -> Self {
        facts.sort_by(TemporalFact::sort_key);
        Self {
            subject: subject.into(),
            relation: relation.into(),
            facts,
        }
    }

    pub fn facts(&self) -> &[TemporalFact] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Indices of facts whose object matches `event` (case- and whitespace-insensitive).
    pub fn find_event(&self, event: &str) -> Vec<usize> {
        let key = fold(event);
        self.facts
            .iter()
            .enumerate()
            .filter(|(_, f)| fold(&f.object) == key)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn index_of(&self, fact: &TemporalFact) -> Option<usize> {
        self.facts.iter().position(|f| f == fact)
    }

    /// One sentence per fact, newline separated.
    pub fn render(&self, relation: &RelationSpec) -> String {
        self.facts
            .iter()
            .map(|f| f.sentence(relation))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn fold(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Index of the fact adjacent to `anchor_index` in `direction`.
pub fn neighbor_index(
    timeline: &Timeline,
    anchor_index: usize,
    direction: Direction,
) -> Result<usize, KbError> {
    let len = timeline.len();
    if anchor_index >= len {
        return Err(KbError::IndexOutOfRange {
            index: anchor_index,
            len,
        });
    }
    let no_neighbor = KbError::NoNeighbor {
        index: anchor_index,
        direction,
    };
    match direction {
        Direction::Before if anchor_index == 0 => Err(no_neighbor),
        Direction::Before => Ok(anchor_index - 1),
        Direction::After if anchor_index + 1 == len || timeline.facts[anchor_index].is_ongoing() => {
            Err(no_neighbor)
        }
        Direction::After => Ok(anchor_index + 1),
    }
}

/// The fact immediately before or after the anchor in sorted order.
pub fn neighbor_fact(
    timeline: &Timeline,
    anchor_index: usize,
    direction: Direction,
) -> Result<&TemporalFact, KbError> {
    neighbor_index(timeline, anchor_index, direction).map(|i| &timeline.facts[i])
}

/// Split a fact context into sentences: on newlines, and within a line on a
/// period that follows a year digit and precedes whitespace.
fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for line in text.lines() {
        let bytes = line.as_bytes();
        let mut start = 0;
        for i in 0..bytes.len() {
            let at_boundary = bytes[i] == b'.'
                && i > 0
                && bytes[i - 1].is_ascii_digit()
                && bytes.get(i + 1).is_some_and(|b| b.is_ascii_whitespace());
            if at_boundary {
                out.push(&line[start..=i]);
                start = i + 1;
            }
        }
        out.push(&line[start..]);
    }
    out.into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_sentence(
    index: usize,
    sentence: &str,
    subject: &str,
    relation: &RelationSpec,
) -> Result<TemporalFact, KbError> {
    let unparsable = |span: &str, reason: String| KbError::UnparsableSentence {
        index,
        span: span.to_string(),
        reason,
    };
    let body = sentence.strip_suffix('.').unwrap_or(sentence).trim_end();
    let (head, times) = body
        .rsplit_once(" from ")
        .ok_or_else(|| unparsable(sentence, "missing `from <time>` clause".into()))?;
    let (from_text, to_text) = match times.split_once(" to ") {
        Some((from, to)) => (from, Some(to)),
        None => (times, None),
    };
    let from = parse_time_point(from_text).map_err(|e| unparsable(from_text, e.to_string()))?;
    let to = to_text
        .map(|t| parse_time_point(t).map_err(|e| unparsable(t, e.to_string())))
        .transpose()?;

    let mut phrases: Vec<&str> = relation.phrases.iter().map(String::as_str).collect();
    phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));
    let object = head.strip_prefix(subject).and_then(|rest| {
        phrases.iter().find_map(|p| {
            let sep = if p.starts_with('\'') { "" } else { " " };
            rest.strip_prefix(sep)
                .and_then(|r| r.strip_prefix(p))
                .and_then(|r| r.strip_prefix(' '))
        })
    });
    let Some(object) = object else {
        // Distinguish a foreign subject from a sentence we can't read at all.
        let found = phrases.iter().find_map(|p| {
            let needle = if p.starts_with('\'') {
                format!("{p} ")
            } else {
                format!(" {p} ")
            };
            head.find(&needle).map(|at| head[..at].to_string())
        });
        return Err(match found {
            Some(found) if !found.trim().is_empty() && found != subject => {
                KbError::SubjectMismatch {
                    index,
                    expected: subject.to_string(),
                    found,
                }
            }
            _ => unparsable(
                head,
                format!("expected `{subject} <{}> <object>`", relation.name),
            ),
        });
    };
    TemporalFact::new(subject, relation.name.clone(), object, from, to)
        .map_err(|e| unparsable(sentence, e.to_string()))
}

/// Parse a fact context into a timeline for `subject` and `relation`.
///
/// Each sentence reads `<subject> <phrase> <object> from <Month Year>[ to <Month Year>].`
pub fn parse_fact_context(
    text: &str,
    subject: &str,
    relation: &RelationSpec,
) -> Result<Timeline, KbError> {
    let subject = subject.trim();
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(KbError::EmptyContext);
    }
    let facts = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| parse_sentence(i, s, subject, relation))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Timeline::new(subject, relation.name.clone(), facts))
}

/// One line of a fact-context source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactContextRecord {
    pub subject: String,
    pub relation: String,
    pub fact_context: String,
}

#[derive(Debug, Error)]
pub enum TimelineLoadError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("record {line}: {source}")]
    Relation { line: usize, source: RelationError },
    #[error("record {line}: {source}")]
    Kb { line: usize, source: KbError },
}

impl FactContextRecord {
    pub fn to_timeline(&self, table: &RelationTable) -> Result<Timeline, KbError> {
        let spec = table
            .lookup(&self.relation)
            .map_err(|e| KbError::UnparsableSentence {
                index: 0,
                span: self.relation.clone(),
                reason: e.to_string(),
            })?;
        parse_fact_context(&self.fact_context, &self.subject, spec)
    }
}

/// Load every record of a fact-context JSONL file as a timeline.
pub fn load_timelines(
    path: impl AsRef<Path>,
    table: &RelationTable,
) -> Result<Vec<Timeline>, TimelineLoadError> {
    let records: Vec<FactContextRecord> = io::read_jsonl(path)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let spec = table.lookup(&r.relation).map_err(|source| {
                TimelineLoadError::Relation { line: i + 1, source }
            })?;
            parse_fact_context(&r.fact_context, &r.subject, spec)
                .map_err(|source| TimelineLoadError::Kb { line: i + 1, source })
        })
        .collect()
}
