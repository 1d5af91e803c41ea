//! Positive and antagonist query pairs for a consistency classifier, plus a
//! seeded subsample.

use anyhow::Result;
use trc_core::query::{build_consistency_pairs, build_dataset, subsample};
use trc_core::relation::RelationTable;
use trc_core::synthetic::answerable_records;

fn main() -> Result<()> {
    let table = RelationTable::builtin();
    let dataset = build_dataset(&answerable_records(40, 1, table), table).instances;

    for pair in build_consistency_pairs(&dataset, 3, 7)? {
        let tag = if pair.label { "same" } else { "diff" };
        println!("[{tag}] {}\n       {}", pair.query_a, pair.query_b);
    }

    let sample = subsample(&dataset, 5, 7)?;
    let ids: Vec<&str> = sample.iter().map(|i| i.id.as_str()).collect();
    println!("\nsubsample: {ids:?}");
    Ok(())
}
