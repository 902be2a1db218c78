//! A scripted agent that exaggerates its reward whenever it paid a positive
//! price in its last round, driven round by round through `Mechanism::step`.
//!
//! Run with `cargo run --example custom_policy`.

use vcg_learn::instances::single_item_benchmark;
use vcg_learn::metrics::RegretLedger;
use vcg_learn::{vcg_solve, AgentPolicy, EstMethod, Mechanism, MechanismConfig, Population, PriceMethod};

fn main() -> vcg_learn::Result<()> {
    let market = single_item_benchmark();
    let n = market.n_agents();
    let grudge = AgentPolicy::scripted(|history, current, _rng| match history.last() {
        Some(last) if last.price > 0.0 => current.realized + 0.2,
        _ => current.realized,
    });
    let mut policies = vec![AgentPolicy::TruthfulRewards; n];
    policies[1] = grudge;

    let config = MechanismConfig::new(EstMethod::Opt, PriceMethod::Sel);
    let mut mechanism = Mechanism::new(&market, config)?;
    let mut population = Population::new(&market, policies, 7)?;
    let mut ledger = RegretLedger::new(vcg_solve(&market));
    for _ in 0..2000 {
        let record = mechanism.step(&mut population)?;
        ledger.update(&record, &market);
        if record.round_t % 500 == 0 {
            println!(
                "t = {:>4}  bracket {:>2}  R_T {:>8.2}  U_1 {:>9.2}  U_2 {:>9.2}",
                record.round_t,
                record.bracket_q,
                ledger.welfare_regret(),
                ledger.utility(0),
                ledger.utility(1)
            );
        }
    }
    Ok(())
}
