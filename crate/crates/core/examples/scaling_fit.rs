//! Log-log slope of the mean VCG regret against the horizon.
//!
//! Run with `cargo run --release --example scaling_fit`.

use vcg_learn::harness::scaling_experiment;
use vcg_learn::instances::single_item_benchmark;
use vcg_learn::{AgentPolicy, MechanismConfig, RunConfig};

fn main() -> vcg_learn::Result<()> {
    let market = single_item_benchmark();
    let horizons = [1000, 3000, 9000, 27000];
    let seeds: Vec<u64> = (0..10).collect();
    for cell in MechanismConfig::grid() {
        let base = RunConfig::new(1, 0, cell, vec![AgentPolicy::TruthfulRewards; market.n_agents()]);
        let fit = scaling_experiment(&market, &horizons, &base, &seeds)?;
        let points: Vec<String> = fit.points.iter().map(|(t, r)| format!("{t}:{r:.0}")).collect();
        println!("{:<8} slope {:.3}  [{}]", cell.label(), fit.slope, points.join(" "));
        for w in &fit.warnings {
            println!("         warning: {w}");
        }
    }
    Ok(())
}
