//! The ten-bidder single-item benchmark under all four mechanism cells.
//!
//! Prints final mean regrets over a handful of seeds. Run with
//! `cargo run --release --example single_item_benchmark`.

use vcg_learn::instances::single_item_benchmark;
use vcg_learn::{run_many, AgentPolicy, MechanismConfig, RunConfig};

fn main() -> vcg_learn::Result<()> {
    let market = single_item_benchmark();
    let seeds: Vec<u64> = (0..10).collect();
    let horizon = 3000;
    println!("{:<8} {:>12} {:>14} {:>14} {:>14}", "cell", "R_T", "R_mech", "R_agent_1", "R_agent_10");
    for cell in MechanismConfig::grid() {
        let base = RunConfig::new(horizon, 0, cell, vec![AgentPolicy::TruthfulRewards; market.n_agents()]);
        let curve = run_many(&market, &base, &seeds)?;
        let get = |c: &str| curve.final_mean(c).unwrap_or(f64::NAN);
        println!(
            "{:<8} {:>12.2} {:>14.2} {:>14.2} {:>14.2}",
            cell.label(),
            get("R_T"),
            get("R_mech"),
            get("R_agent_1"),
            get("R_agent_10")
        );
    }
    Ok(())
}
