//! Score two simulated models and print the comparison report.

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trc_core::metrics::{evaluate, EvalOptions, ResponsePair};
use trc_core::query::{build_dataset, BenchmarkInstance};
use trc_core::relation::RelationTable;
use trc_core::report::build_report;
use trc_core::synthetic::answerable_records;

/// Answers each query correctly with the given probabilities; wrong
/// chronological answers name the neighbouring instance's answer instead.
fn simulate(dataset: &[BenchmarkInstance], p_abs: f64, p_chr: f64, seed: u64) -> Vec<ResponsePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .iter()
        .enumerate()
        .map(|(n, i)| {
            let abs = if rng.gen_bool(p_abs) { i.answer.clone() } else { "unknown".into() };
            let chr = if rng.gen_bool(p_chr) {
                i.answer.clone()
            } else {
                dataset[(n + 1) % dataset.len()].answer.clone()
            };
            ResponsePair::new(&i.id, abs, chr)
        })
        .collect()
}

fn main() -> Result<()> {
    let table = RelationTable::builtin();
    let dataset = build_dataset(&answerable_records(300, 8, table), table).instances;

    let baseline = evaluate(&dataset, &simulate(&dataset, 0.2, 0.4, 1), EvalOptions::default())?;
    let candidate = evaluate(&dataset, &simulate(&dataset, 0.5, 0.55, 2), EvalOptions::default())?;
    let doc = build_report(&candidate, &dataset, Some(&baseline))?;
    print!("{}", doc.to_text());
    Ok(())
}
