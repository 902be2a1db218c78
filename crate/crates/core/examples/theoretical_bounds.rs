//! Finite-horizon guarantees on the benchmark as the horizon grows.
//!
//! Run with `cargo run --example theoretical_bounds`.

use vcg_learn::instances::single_item_benchmark;
use vcg_learn::metrics::{bound, BoundParams, Guarantee, ParticipationKind};
use vcg_learn::MechanismConfig;

fn main() -> vcg_learn::Result<()> {
    let market = single_item_benchmark();
    println!("{:<8} {:>8} {:>14} {:>14} {:>14} {:>14}", "cell", "T", "truthful", "IR", "R_max", "R_T");
    for cell in MechanismConfig::grid() {
        for horizon in [1_000, 10_000, 100_000, 1_000_000] {
            let p = BoundParams::for_instance(&market, horizon, cell.est_method, cell.price_method)
                .with_participation(ParticipationKind::Rewards);
            println!(
                "{:<8} {:>8} {:>14.1} {:>14.1} {:>14.1} {:>14.1}",
                cell.label(),
                horizon,
                bound(Guarantee::Truthfulness, &p)?,
                bound(Guarantee::IndividualRationality, &p)?,
                bound(Guarantee::VcgRegret, &p)?,
                bound(Guarantee::WelfareRegret, &p)?,
            );
        }
    }
    Ok(())
}
