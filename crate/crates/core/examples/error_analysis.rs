//! Per-entity breakdown and correlations over a fixed table of scores.

use anyhow::Result;
use trc_core::metrics::{pearson, round2};
use trc_core::relation::EntityType;

fn main() -> Result<()> {
    let counts = [1583.0, 892.0, 930.0, 187.0, 717.0, 117.0];
    let trc = [34.18, 35.76, 60.86, 43.85, 46.3, 40.17];
    let base_trcf = [2.02, 0.56, 14.95, 1.07, 2.79, 8.55];
    let cand_trcf = [7.77, 0.34, 45.81, 5.88, 3.35, 15.38];

    println!("{:<16} {:>6} {:>8} {:>10} {:>10}", "entity", "count", "TRC", "base TRCF", "TRCF");
    for (i, e) in EntityType::ALL.iter().enumerate() {
        println!("{:<16} {:>6} {:>8.2} {:>10.2} {:>10.2}", e.as_str(), counts[i], trc[i], base_trcf[i], cand_trcf[i]);
    }
    println!("\ncount vs TRC:        {:.2}", round2(pearson(&counts, &trc)?));
    println!("base vs cand TRCF:   {:.2}", round2(pearson(&base_trcf, &cand_trcf)?));
    Ok(())
}
