//! The two-hypothesis construction behind the minimax lower bound, and how
//! the mechanism does on each.
//!
//! Run with `cargo run --release --example lower_bound_instances`.

use vcg_learn::harness::run_final;
use vcg_learn::instances::lower_bound_pair;
use vcg_learn::metrics::lower_bound_value;
use vcg_learn::{AgentPolicy, MechanismConfig, RunConfig};

fn main() -> vcg_learn::Result<()> {
    let (n, outcomes, horizon) = (2, 3, 512);
    let pair = lower_bound_pair(n, outcomes, horizon)?;
    println!("delta = {:.4}, lower bound = {:.4}", pair.delta, lower_bound_value(n, horizon)?);
    let seeds: Vec<u64> = (0..100).collect();
    for cell in MechanismConfig::grid() {
        let base = RunConfig::new(horizon, 0, cell, vec![AgentPolicy::TruthfulRewards; n]);
        let mut means = Vec::new();
        for theta in [&pair.theta1, &pair.theta2] {
            let finals = run_final(theta, &base, &seeds)?;
            means.push(finals.iter().map(|s| s.vcg).sum::<f64>() / finals.len() as f64);
        }
        println!("{:<8} mean R_max: theta1 {:>9.2}  theta2 {:>9.2}", cell.label(), means[0], means[1]);
    }
    Ok(())
}
