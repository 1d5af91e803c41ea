//! Build paired-query instances from event-event source records.
//!
//! Uses a small seeded synthetic knowledge base, prints one instance in
//! full and the reasons some records were skipped.

use anyhow::Result;
use trc_core::query::build_dataset;
use trc_core::relation::RelationTable;
use trc_core::synthetic::{generate, SyntheticConfig};

fn main() -> Result<()> {
    let table = RelationTable::builtin();
    let kb = generate(&SyntheticConfig { timelines: 6, seed: 42, ..Default::default() }, table);
    let out = build_dataset(&kb.records, table);
    println!("{} records -> {} instances, {} skipped", kb.records.len(), out.instances.len(), out.skipped.len());

    let inst = &out.instances[0];
    println!("\n{}\n", inst.fact_context);
    println!("absolute:       {}", inst.query_absolute);
    println!("chronological:  {}", inst.query_chronological);
    println!("answer:         {}", inst.answer);
    println!("time pathway:   {}", inst.pathway_time_oriented);
    println!("event pathway:  {}", inst.pathway_event_oriented);

    println!();
    for skip in out.skipped.iter().take(3) {
        println!("skipped {}: {}", skip.id, skip.reason);
    }
    Ok(())
}
