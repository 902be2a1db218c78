//! Paired deviation runs: agent 1 under-reports its rewards by half, and a
//! bidder submits a false bid table. Differences are `U^π − U` per seed.
//!
//! Run with `cargo run --release --example truthfulness_deviation`.

use vcg_learn::harness::deviation_experiment;
use vcg_learn::instances::single_item_benchmark;
use vcg_learn::metrics::{bound, BoundParams, Guarantee, ParticipationKind};
use vcg_learn::{AgentPolicy, EstMethod, MechanismConfig, Misreport, PriceMethod, RunConfig};

fn main() -> vcg_learn::Result<()> {
    let market = single_item_benchmark();
    let n = market.n_agents();
    let horizon = 3000;
    let seeds: Vec<u64> = (0..20).collect();
    let cell = MechanismConfig::new(EstMethod::Etc, PriceMethod::Age);

    let base = RunConfig::new(horizon, 0, cell, vec![AgentPolicy::TruthfulRewards; n]);
    let shade = AgentPolicy::StationaryMisreport { misreport: Misreport::Scale { factor: 0.5 } };
    let result = deviation_experiment(&market, 0, &shade, &base, &seeds)?;
    let p = BoundParams::for_instance(&market, horizon, cell.est_method, cell.price_method)
        .with_participation(ParticipationKind::Rewards);
    println!("reward misreport: mean gain {:.3}, max gain {:.3}", result.mean, result.max());
    println!("                  bound {:.3}", bound(Guarantee::Truthfulness, &p)?);

    let bidders = RunConfig::new(horizon, 0, cell, vec![AgentPolicy::TruthfulBids; n]);
    let lie = AgentPolicy::FalseBids { bid: vec![0.5, 0.0] };
    let result = deviation_experiment(&market, 0, &lie, &bidders, &seeds)?;
    println!("false bid:        mean gain {:.3}, max gain {:.3}", result.mean, result.max());
    Ok(())
}
