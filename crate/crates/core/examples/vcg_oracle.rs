//! Full-information VCG on a two-item market with three bidders.
//!
//! Run with `cargo run --example vcg_oracle`.

use vcg_learn::{vcg_solve, MarketInstance};

fn main() -> vcg_learn::Result<()> {
    // Allocations per agent: nothing, item A, item B.
    let allocations = vec!["none".to_string(), "A".to_string(), "B".to_string()];
    // An outcome says who gets A and who gets B (or nobody).
    let mut outcomes = Vec::new();
    let mut maps = vec![Vec::new(); 3];
    for a in 0..=3 {
        for b in 0..=3 {
            if a == b && a < 3 {
                continue;
            }
            let who = |x: usize| if x < 3 { format!("{}", x + 1) } else { "-".into() };
            outcomes.push(format!("A->{} B->{}", who(a), who(b)));
            for (i, map) in maps.iter_mut().enumerate() {
                map.push(if a == i { 1 } else if b == i { 2 } else { 0 });
            }
        }
    }
    let values = vec![vec![0.0, 0.8, 0.3], vec![0.0, 0.6, 0.5], vec![0.0, 0.2, 0.4]];
    let seller = vec![0.0; outcomes.len()];
    let market = MarketInstance::new(allocations, outcomes, maps, values, seller, 0.1, 3)?;

    let sol = vcg_solve(&market);
    println!("optimal outcome: {}", market.outcome_names()[sol.optimal_outcome]);
    println!("max welfare:     {:.3}", sol.max_welfare);
    for i in 0..market.n_agents() {
        println!(
            "agent {}: value {:.3}, price {:.3}, utility {:.3}",
            i + 1,
            market.value_at(i, sol.optimal_outcome),
            sol.prices[i],
            sol.agent_utilities[i]
        );
    }
    println!("seller utility:  {:.3}", sol.seller_utility);
    Ok(())
}
