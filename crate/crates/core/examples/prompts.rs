//! Render one target query under every prompt style.

use anyhow::Result;
use trc_core::prompt::{build_prompts, PromptStyle};
use trc_core::query::build_dataset;
use trc_core::relation::RelationTable;
use trc_core::synthetic::answerable_records;

fn main() -> Result<()> {
    let table = RelationTable::builtin();
    let dataset = build_dataset(&answerable_records(60, 3, table), table).instances;
    let (target, pool) = dataset.split_at(1);

    for style in [
        PromptStyle::zero_shot(),
        PromptStyle::icl(2),
        PromptStyle::semantic_icl(2),
        PromptStyle::semantic_cot(2),
    ] {
        // Two records per target: absolute first, then chronological.
        let records = build_prompts(target, pool, style, 0)?;
        println!("===== {} ({} shots), {} query =====", style.kind, style.shots, records[1].reference_kind.as_str());
        println!("{}\n", records[1].prompt);
    }
    Ok(())
}
