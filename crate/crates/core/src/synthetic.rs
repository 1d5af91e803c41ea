//! Seeded synthetic knowledge bases and matching event-event source records,
//! for tests, examples and runs without the upstream data.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kb::{TemporalFact, TimePoint, Timeline};
use crate::query::{L3Record, QueryTemplate};
use crate::relation::{Direction, EntityType, RelationTable};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "ven", "dor", "mir", "tas", "bel", "ru", "shi", "gan", "pel", "wyn", "zo", "mar",
    "kel", "sa", "ith", "orn", "qua", "lis", "bren", "hal", "dun", "vek",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub timelines: usize,
    /// Facts per timeline, inclusive bounds; at least 2.
    pub min_facts: usize,
    pub max_facts: usize,
    /// Chance that a timeline's last fact has no end time.
    pub ongoing_probability: f64,
    /// Also emit the records that have no neighbour (before the first fact,
    /// after the last), which the builder must skip.
    pub include_boundary: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            timelines: 50,
            min_facts: 2,
            max_facts: 6,
            ongoing_probability: 0.3,
            include_boundary: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticKb {
    pub timelines: Vec<Timeline>,
    pub records: Vec<L3Record>,
}

impl SyntheticKb {
    /// Number of records that have a neighbour: two per adjacent fact pair.
    pub fn answerable(&self) -> usize {
        self.timelines.iter().map(|t| 2 * (t.len() - 1)).sum()
    }
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
    w[..1].make_ascii_uppercase();
    w
}

fn object_name(rng: &mut ChaCha8Rng, entity: EntityType) -> String {
    let base = word(rng);
    match entity {
        EntityType::Person => format!("{base} {}", word(rng)),
        EntityType::Team => format!("{base} FC"),
        EntityType::Position => format!("Minister of {base}"),
        EntityType::School => format!("{base} University"),
        EntityType::Employer => format!("{base} Corporation"),
        EntityType::PoliticalParty => format!("{base} Party"),
    }
}

/// Generate timelines over every relation in `table`, round-robin, and one
/// source record per (anchor fact, direction).
pub fn generate(config: &SyntheticConfig, table: &RelationTable) -> SyntheticKb {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let relations: Vec<_> = table.iter().collect();
    let min = config.min_facts.max(2);
    let max = config.max_facts.max(min);
    let mut timelines = Vec::with_capacity(config.timelines);
    let mut records = Vec::new();

    for t in 0..config.timelines {
        let spec = relations[t % relations.len()];
        let subject = format!("{} {}", word(&mut rng), word(&mut rng));
        let k = rng.gen_range(min..=max);
        let mut seen = HashSet::new();
        let mut cursor = rng.gen_range(1900..=1990) * 12 + rng.gen_range(0..12);
        let mut facts = Vec::with_capacity(k);
        for i in 0..k {
            let object = loop {
                let o = object_name(&mut rng, spec.entity_type);
                if seen.insert(o.to_lowercase()) {
                    break o;
                }
            };
            let from = TimePoint::from_ordinal(cursor).expect("in range");
            cursor += rng.gen_range(1..=60);
            let ongoing = i + 1 == k && rng.gen_bool(config.ongoing_probability);
            let to = (!ongoing).then(|| TimePoint::from_ordinal(cursor).expect("in range"));
            facts.push(
                TemporalFact::new(&subject, spec.name.clone(), object, from, to)
                    .expect("valid synthetic fact"),
            );
        }
        let timeline = Timeline::new(&subject, spec.name.clone(), facts);
        let context = timeline.render(spec);
        let template = QueryTemplate::for_relation(spec).expect("builtin template");
        let facts = timeline.facts();
        for (i, anchor) in facts.iter().enumerate() {
            for direction in [Direction::Before, Direction::After] {
                let neighbor = match direction {
                    Direction::Before => i.checked_sub(1),
                    Direction::After => (i + 1 < k).then_some(i + 1),
                };
                if neighbor.is_none() && !config.include_boundary {
                    continue;
                }
                records.push(L3Record {
                    id: Some(format!("syn-{t}-{i}-{}", direction.keyword())),
                    question: template.render(&subject, direction.keyword(), &anchor.object),
                    subject: subject.clone(),
                    relation: spec.name.clone(),
                    fact_context: context.clone(),
                    answer: neighbor.map_or_else(String::new, |j| facts[j].object.clone()),
                });
            }
        }
        timelines.push(timeline);
    }
    SyntheticKb { timelines, records }
}

/// Answerable records only, cut to exactly `count` by growing the KB until
/// it has enough.
pub fn answerable_records(count: usize, seed: u64, table: &RelationTable) -> Vec<L3Record> {
    let mut config = SyntheticConfig {
        timelines: count.div_ceil(4).max(1),
        include_boundary: false,
        seed,
        ..SyntheticConfig::default()
    };
    loop {
        let kb = generate(&config, table);
        if kb.records.len() >= count {
            return kb.records.into_iter().take(count).collect();
        }
        config.timelines *= 2;
    }
}
