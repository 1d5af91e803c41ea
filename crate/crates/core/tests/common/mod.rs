#![allow(dead_code)]

pub mod mock_server;
pub mod properties;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trc_core::metrics::ResponsePair;
use trc_core::query::{build_dataset, BenchmarkInstance, L3Record};
use trc_core::relation::RelationTable;
use trc_core::synthetic;

pub const PELIKAN_CONTEXT: &str = "Jaroslav Pelikan worked for Valparaiso University from January 1946 to January 1949.\nJaroslav Pelikan worked for Concordia Seminary from January 1949 to January 1953.";

pub fn pelikan_record() -> L3Record {
    L3Record {
        id: Some("pelikan".into()),
        question: "Which employer did Jaroslav Pelikan work for before Concordia Seminary?".into(),
        subject: "Jaroslav Pelikan".into(),
        relation: "employer".into(),
        fact_context: PELIKAN_CONTEXT.into(),
        answer: "Valparaiso University".into(),
    }
}

/// `count` instances from the seeded synthetic KB.
pub fn synthetic_instances(count: usize, seed: u64) -> Vec<BenchmarkInstance> {
    let table = RelationTable::builtin();
    let records = synthetic::answerable_records(count, seed, table);
    let out = build_dataset(&records, table);
    assert!(out.skipped.is_empty(), "{:?}", out.skipped);
    out.instances
}

/// Answer normalization written independently of the library: lowercase,
/// drop every character that is neither alphanumeric nor whitespace, drop
/// the words a/an/the, squeeze whitespace.
pub fn oracle_normalize(s: &str) -> String {
    let mut cleaned = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c.is_whitespace() {
            cleaned.extend(c.to_lowercase());
        }
    }
    let mut words = Vec::new();
    for w in cleaned.split_whitespace() {
        if w != "a" && w != "an" && w != "the" {
            words.push(w);
        }
    }
    words.join(" ")
}

/// Consistency counted pair by pair with the oracle normalizer.
pub fn brute_force_consistent(pairs: &[ResponsePair]) -> usize {
    let mut n = 0;
    for p in pairs {
        if oracle_normalize(&p.answer_absolute) == oracle_normalize(&p.answer_chronological) {
            n += 1;
        }
    }
    n
}

pub fn brute_force_consistent_fact(pairs: &[ResponsePair], golds: &HashMap<String, String>) -> usize {
    let mut n = 0;
    for p in pairs {
        let a = oracle_normalize(&p.answer_absolute);
        if a == oracle_normalize(&p.answer_chronological) && a == oracle_normalize(&golds[&p.instance_id]) {
            n += 1;
        }
    }
    n
}

pub fn perfect_responder(dataset: &[BenchmarkInstance]) -> Vec<ResponsePair> {
    dataset
        .iter()
        .map(|i| ResponsePair::new(&i.id, &i.answer, &i.answer))
        .collect()
}

/// Right on a random subset of chronological queries, and always a
/// different, wrong answer on the absolute query.
pub fn reference_blind_responder(dataset: &[BenchmarkInstance], seed: u64) -> Vec<ResponsePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .iter()
        .map(|i| {
            let chrono = if rng.gen_bool(0.6) {
                i.answer.clone()
            } else {
                format!("not {}", i.answer)
            };
            ResponsePair::new(&i.id, format!("elsewhere {}", i.id), chrono)
        })
        .collect()
}

/// Each arm answered with a gold answer drawn from a small shared pool, with
/// case, article and punctuation noise.
pub fn scrambled_responder(dataset: &[BenchmarkInstance], seed: u64) -> Vec<ResponsePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool: Vec<&str> = dataset.iter().take(6).map(|i| i.answer.as_str()).collect();
    let noisy = |rng: &mut ChaCha8Rng, own: &str| -> String {
        let base = if rng.gen_bool(0.3) { own } else { *pool.choose(rng).unwrap() };
        match rng.gen_range(0..4) {
            0 => base.to_string(),
            1 => base.to_uppercase(),
            2 => format!("The {base}."),
            _ => format!("{base}!"),
        }
    };
    dataset
        .iter()
        .map(|i| {
            let a = noisy(&mut rng, &i.answer);
            let c = noisy(&mut rng, &i.answer);
            ResponsePair::new(&i.id, a, c)
        })
        .collect()
}
