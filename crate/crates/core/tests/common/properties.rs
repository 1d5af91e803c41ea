//! Property checks shared by the property tests and the acceptance run.
//! Each check runs 1,000 generated cases from a fixed RNG.

use std::collections::HashMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use trc_core::io;
use trc_core::kb::{neighbor_index, parse_fact_context, TemporalFact, TimePoint, Timeline};
use trc_core::metrics::{
    evaluate, exact_match, gold_map, pearson, token_f1, EvalOptions, ResponsePair,
};
use trc_core::query::{build_dataset, build_instance, reference_span, BenchmarkInstance, L3Record, QueryTemplate};
use trc_core::relation::{Direction, EntityType, RelationTable};
use trc_core::synthetic::{self, SyntheticConfig};
use trc_core::translation::{bleu_n, chrf_pp, ChrfConfig, Smoothing};

use super::{brute_force_consistent, brute_force_consistent_fact};

pub const CASES: u32 = 1000;

fn runner() -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner().run(&strategy, test).map_err(|e| e.to_string())
}

const SUFFIXES: [&str; 8] = ["North", "South", "East", "West", "Upper", "Lower", "Grand", "Royal"];

fn word() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{2,7}"
}

/// A relation name and a timeline for it with distinct objects, random gaps
/// and an optionally ongoing last fact.
fn timeline_strategy() -> impl Strategy<Value = (String, Timeline)> {
    let n_rel = RelationTable::builtin().len();
    (
        0..n_rel,
        word(),
        word(),
        (1700 * 12)..(2000 * 12),
        prop::collection::vec((word(), 1..60i32, 0..12i32), 1..8),
        any::<bool>(),
    )
        .prop_map(|(ri, first, last, start, items, ongoing)| {
            let spec = RelationTable::builtin().iter().nth(ri).unwrap();
            let subject = format!("{first} {last}");
            let mut cursor = start;
            let k = items.len();
            let facts = items
                .into_iter()
                .enumerate()
                .map(|(i, (w, len, gap))| {
                    cursor += gap;
                    let from = TimePoint::from_ordinal(cursor).unwrap();
                    cursor += len;
                    let to = if ongoing && i + 1 == k {
                        None
                    } else {
                        Some(TimePoint::from_ordinal(cursor).unwrap())
                    };
                    TemporalFact::new(&subject, spec.name.clone(), format!("{w} {}", SUFFIXES[i]), from, to)
                        .unwrap()
                })
                .collect();
            (spec.name.clone(), Timeline::new(&subject, spec.name.clone(), facts))
        })
}

pub fn kb_render_round_trip() -> Result<(), String> {
    run(timeline_strategy(), |(rel, tl)| {
        let spec = RelationTable::builtin().lookup(&rel).unwrap();
        let parsed = parse_fact_context(&tl.render(spec), &tl.subject, spec)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(parsed, tl);
        Ok(())
    })
}

pub fn neighbor_inverse() -> Result<(), String> {
    run(timeline_strategy(), |(_, tl)| {
        for i in 0..tl.len() {
            if let Ok(j) = neighbor_index(&tl, i, Direction::After) {
                prop_assert_eq!(neighbor_index(&tl, j, Direction::Before).ok(), Some(i));
            }
            if let Ok(j) = neighbor_index(&tl, i, Direction::Before) {
                prop_assert_eq!(neighbor_index(&tl, j, Direction::After).ok(), Some(i));
            }
        }
        Ok(())
    })
}

pub fn time_point_order() -> Result<(), String> {
    let tp = (634 * 12..2100 * 12i32).prop_map(|o| TimePoint::from_ordinal(o).unwrap());
    run((tp.clone(), tp), |(a, b)| {
        prop_assert_eq!(a.cmp(&b), a.ordinal().cmp(&b.ordinal()));
        prop_assert_eq!(a.to_string().parse::<TimePoint>().ok(), Some(a));
        Ok(())
    })
}

/// Queries and pathways built from a random timeline: the reference span
/// holds the anchor event, the absolute query swaps in the boundary time,
/// and both pathways mention anchor, reference and answer.
pub fn query_construction() -> Result<(), String> {
    let strategy = timeline_strategy()
        .prop_filter("needs two facts", |(_, tl)| tl.len() >= 2)
        .prop_flat_map(|(rel, tl)| {
            let n = tl.len();
            (Just(rel), Just(tl), 0..n, any::<bool>())
        });
    run(strategy, |(rel, tl, anchor_i, before)| {
        let table = RelationTable::builtin();
        let spec = table.lookup(&rel).unwrap();
        let direction = if before { Direction::Before } else { Direction::After };
        let Ok(answer_i) = neighbor_index(&tl, anchor_i, direction) else {
            return Ok(());
        };
        let anchor = &tl.facts()[anchor_i];
        let answer = &tl.facts()[answer_i];
        let template = QueryTemplate::for_relation(spec).unwrap();
        let record = L3Record {
            id: Some("x".into()),
            question: template.render(&tl.subject, direction.keyword(), &anchor.object),
            subject: tl.subject.clone(),
            relation: rel.clone(),
            fact_context: tl.render(spec),
            answer: answer.object.clone(),
        };
        let inst = build_instance(&record, table).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let boundary = match direction {
            Direction::Before => anchor.from,
            Direction::After => anchor.to.unwrap(),
        };
        let span = reference_span(&inst.query_chronological, direction).unwrap();
        prop_assert_eq!(&inst.query_chronological[span.clone()], anchor.object.as_str());
        let expected_abs = format!(
            "{}{}{}",
            &inst.query_chronological[..span.start],
            boundary,
            &inst.query_chronological[span.end..]
        );
        prop_assert_eq!(&inst.query_absolute, &expected_abs);
        prop_assert_eq!(&inst.answer, &answer.object);
        let dir = direction.restricted();
        let lower = |s: &str| s.to_lowercase();
        let time_ref = format!("{dir} {}", lower(&boundary.to_string()));
        let event_ref = format!("{dir} {}", lower(&anchor.object));
        let ending = format!("{}.", lower(&answer.object));
        prop_assert!(inst.pathway_time_oriented.contains(&time_ref));
        prop_assert!(inst.pathway_event_oriented.contains(&event_ref));
        for p in [&inst.pathway_time_oriented, &inst.pathway_event_oriented] {
            prop_assert!(p.starts_with("because "));
            prop_assert!(p.contains(&lower(&anchor.object)));
            prop_assert!(p.ends_with(&ending));
            prop_assert_eq!(p, &lower(p));
        }
        Ok(())
    })
}

fn digest(instances: &[BenchmarkInstance]) -> String {
    io::digest_bytes(io::to_jsonl_string(instances).unwrap())
}

pub fn dataset_determinism() -> Result<(), String> {
    run((any::<u64>(), 1..6usize, any::<bool>()), |(seed, timelines, boundary)| {
        let table = RelationTable::builtin();
        let config = SyntheticConfig {
            timelines,
            include_boundary: boundary,
            seed,
            ..SyntheticConfig::default()
        };
        let kb = synthetic::generate(&config, table);
        let first = build_dataset(&kb.records, table);
        let second = build_dataset(&synthetic::generate(&config, table).records, table);
        prop_assert_eq!(digest(&first.instances), digest(&second.instances));
        let sequential: Vec<BenchmarkInstance> = kb
            .records
            .iter()
            .filter_map(|r| build_instance(r, table).ok())
            .collect();
        prop_assert_eq!(digest(&first.instances), digest(&sequential));
        prop_assert_eq!(first.instances.len(), kb.answerable());
        Ok(())
    })
}

const VOCAB: [&str; 10] = [
    "Red FC", "red fc", "The Red FC.", "Blue", "blue!", "Green Party", "a b", "b a", "", "Red",
];

fn answer() -> impl Strategy<Value = String> {
    prop::sample::select(&VOCAB[..]).prop_map(str::to_string)
}

/// A dataset with random golds and a response pair per instance.
fn scored_strategy() -> impl Strategy<Value = (Vec<BenchmarkInstance>, Vec<ResponsePair>)> {
    prop::collection::vec((answer(), answer(), answer(), 0..6usize), 1..40).prop_map(|rows| {
        let mut dataset = Vec::new();
        let mut pairs = Vec::new();
        for (i, (gold, a, c, et)) in rows.into_iter().enumerate() {
            let id = format!("q{i}");
            dataset.push(BenchmarkInstance {
                id: id.clone(),
                language: if i % 3 == 0 { "de".into() } else { "en".into() },
                relation: "r".into(),
                entity_type: EntityType::ALL[et],
                direction: Direction::Before,
                query_absolute: String::new(),
                query_chronological: String::new(),
                answer: gold,
                pathway_time_oriented: String::new(),
                pathway_event_oriented: String::new(),
                fact_context: String::new(),
            });
            pairs.push(ResponsePair::new(id, a, c));
        }
        (dataset, pairs)
    })
}

pub fn metric_dominance() -> Result<(), String> {
    run(scored_strategy(), |(dataset, pairs)| {
        let r = evaluate(&dataset, &pairs, EvalOptions::default()).unwrap();
        prop_assert!(r.trcf <= r.trc && r.trc <= 100.0);
        prop_assert!(r.trcf <= r.em_ctr.min(r.em_atr) + 1e-9);
        prop_assert_eq!(r.dev_em, r.em_atr - r.em_ctr);
        prop_assert_eq!(r.dev_f1, r.f1_atr - r.f1_ctr);
        prop_assert!(r.f1_ctr >= r.em_ctr - 1e-9 && r.f1_atr >= r.em_atr - 1e-9);
        let golds: HashMap<String, String> = gold_map(&dataset);
        let m = pairs.len() as f64;
        prop_assert_eq!(r.trc, 100.0 * brute_force_consistent(&pairs) as f64 / m);
        prop_assert_eq!(r.trcf, 100.0 * brute_force_consistent_fact(&pairs, &golds) as f64 / m);
        for b in r.per_entity.values().chain(r.per_language.values()) {
            prop_assert!(b.trcf <= b.trc && b.trc <= 100.0);
        }
        Ok(())
    })
}

pub fn permutation_invariance() -> Result<(), String> {
    let strategy = scored_strategy().prop_flat_map(|(d, p)| {
        let shuffled = Just(p.clone()).prop_shuffle();
        (Just(d), Just(p), shuffled)
    });
    run(strategy, |(dataset, pairs, shuffled)| {
        let a = evaluate(&dataset, &pairs, EvalOptions::default()).unwrap();
        let b = evaluate(&dataset, &shuffled, EvalOptions::default()).unwrap();
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn f1_dominates_em() -> Result<(), String> {
    let text = "[a-cA-C ,.!]{0,12}";
    run((text, text), |(pred, gold)| {
        let em = exact_match(&pred, &gold);
        let f1 = token_f1(&pred, &gold);
        prop_assert!((0.0..=1.0).contains(&f1));
        prop_assert!(f1 >= f64::from(em));
        if em == 1 {
            prop_assert_eq!(f1, 1.0);
        }
        Ok(())
    })
}

pub fn pearson_affine() -> Result<(), String> {
    let strategy = (
        prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..30),
        0.1..10.0f64,
        -100.0..100.0f64,
        0.1..10.0f64,
        -100.0..100.0f64,
        any::<bool>(),
    );
    run(strategy, |(xy, a, b, c, d, flip)| {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        let Ok(r) = pearson(&x, &y) else {
            return Ok(());
        };
        let a = if flip { -a } else { a };
        let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let y2: Vec<f64> = y.iter().map(|v| c * v + d).collect();
        let r2 = pearson(&x2, &y2).unwrap();
        let expected = if flip { -r } else { r };
        prop_assert!((r2 - expected).abs() <= 1e-12, "{} vs {}", r2, expected);
        prop_assert!((pearson(&y, &x).unwrap() - r).abs() <= 1e-12);
        Ok(())
    })
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-zé]{1,6}", 2..10)
}

pub fn chrf_properties() -> Result<(), String> {
    let cfg = ChrfConfig::default();
    run((sentence(), any::<prop::sample::Index>(), 1..4usize), move |(words, drop, spaces)| {
        let text = words.join(" ");
        prop_assert_eq!(chrf_pp(&text, &text, &cfg), 100.0);
        let padded = words.join(&" ".repeat(spaces));
        let mut shorter = words.clone();
        shorter.remove(drop.index(words.len()));
        let shorter = shorter.join(" ");
        let degraded = chrf_pp(&shorter, &text, &cfg);
        prop_assert!((0.0..100.0).contains(&degraded), "{}", degraded);
        prop_assert_eq!(chrf_pp(&shorter, &padded, &cfg), degraded);
        Ok(())
    })
}

pub fn bleu_properties() -> Result<(), String> {
    run((sentence(), any::<prop::sample::Index>(), 1..5usize), |(words, drop, order)| {
        let text = words.join(" ");
        prop_assert_eq!(bleu_n(&text, &text, order, Smoothing::AddOne), 100.0);
        let mut shorter = words.clone();
        shorter.remove(drop.index(words.len()));
        let degraded = bleu_n(&shorter.join(" "), &text, order, Smoothing::AddOne);
        prop_assert!((0.0..100.0).contains(&degraded), "{}", degraded);
        prop_assert_eq!(bleu_n(&shorter.join("  "), &text, order, Smoothing::AddOne), degraded);
        Ok(())
    })
}

/// Every property check, by name.
pub type Check = (&'static str, fn() -> Result<(), String>);

pub fn all() -> Vec<Check> {
    vec![
        ("kb render/parse round trip", kb_render_round_trip),
        ("neighbor lookup is its own inverse", neighbor_inverse),
        ("time point order and display round trip", time_point_order),
        ("query and pathway construction", query_construction),
        ("dataset determinism via digests", dataset_determinism),
        ("trcf <= trc <= 100, trcf <= min(em), dev identity, trc oracle", metric_dominance),
        ("evaluation is permutation invariant", permutation_invariance),
        ("token_f1 >= exact_match", f1_dominates_em),
        ("pearson affine invariance within 1e-12", pearson_affine),
        ("chrF++ identity, degradation, whitespace", chrf_properties),
        ("BLEU-n identity, degradation, whitespace", bleu_properties),
    ]
}
