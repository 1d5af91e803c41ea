//! Fine-tuning records under cross and unilateral pairing.

use anyhow::Result;
use trc_core::prompt::{export_sft, Pairing, DEFAULT_SFT_INSTRUCTION};
use trc_core::query::build_dataset;
use trc_core::relation::RelationTable;
use trc_core::synthetic::answerable_records;

fn main() -> Result<()> {
    let table = RelationTable::builtin();
    let dataset = build_dataset(&answerable_records(10, 5, table), table).instances;

    for pairing in [Pairing::Cross, Pairing::UnilateralAbsolute] {
        let records = export_sft(&dataset, pairing, DEFAULT_SFT_INSTRUCTION);
        println!("{pairing:?}: {} records from {} instances", records.len(), dataset.len());
    }

    // Cross pairing: the chronological query is taught with the time-oriented
    // pathway, the absolute query with the event-oriented one.
    for rec in export_sft(&dataset[..1], Pairing::Cross, DEFAULT_SFT_INSTRUCTION) {
        println!("\n{}", serde_json::to_string_pretty(&rec)?);
    }
    Ok(())
}
