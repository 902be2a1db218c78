//! Canonical markets: the two-hypothesis lower-bound pair, the single-item
//! benchmark with ten bidders, and seeded random markets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, precondition, Result};
use crate::market::MarketInstance;

/// Largest outcome set `random_instance` will build.
pub const RANDOM_OUTCOME_LIMIT: usize = 1 << 20;

/// Noise level of random markets.
pub const RANDOM_SIGMA: f64 = 0.5;

/// `Θ1` and `Θ2` with the gap `δ` that separates them.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundPair {
    pub theta1: MarketInstance,
    pub theta2: MarketInstance,
    pub delta: f64,
}

/// Value of every agent at outcomes beyond `n`; any constant below 1/4 works.
const FILLER_VALUE: f64 = 0.2;

/// Builds `Θ1` and `Θ2` on `Ω = S = {0, …, num_outcomes − 1}` with identity maps.
///
/// In `Θ1` every agent values outcome 0 at 1/2; outcome `j ∈ 1..=n` is worth 0
/// to agent `j` and 1/2 to everybody else. `Θ2` raises the latter to `1/2 + δ`
/// with `δ = (16 / (T (n−1)²))^{1/3}`.
pub fn lower_bound_pair(n: usize, num_outcomes: usize, horizon: usize) -> Result<LowerBoundPair> {
    if n < 2 {
        return Err(precondition("the lower-bound construction needs n ≥ 2"));
    }
    if num_outcomes < n + 1 {
        return Err(precondition(format!("need at least n + 1 = {} outcomes", n + 1)));
    }
    if horizon <= 128 * n {
        return Err(precondition(format!("the construction needs T > 128n = {}", 128 * n)));
    }
    let delta = (16.0 / (horizon as f64 * ((n - 1) * (n - 1)) as f64)).cbrt();
    let build = |bump: f64| {
        let values: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..num_outcomes)
                    .map(|j| match j {
                        0 => 0.5,
                        j if j <= n && j == i + 1 => 0.0,
                        j if j <= n => 0.5 + bump,
                        _ => FILLER_VALUE,
                    })
                    .collect()
            })
            .collect();
        let names: Vec<String> = (0..num_outcomes).map(|j| format!("o{j}")).collect();
        let identity: Vec<usize> = (0..num_outcomes).collect();
        MarketInstance::new(
            names.clone(),
            names,
            vec![identity; n],
            values,
            vec![0.0; num_outcomes],
            1.0,
            num_outcomes,
        )
    };
    Ok(LowerBoundPair { theta1: build(0.0)?, theta2: build(delta)?, delta })
}

pub const BENCHMARK_AGENTS: usize = 10;

/// Item value of benchmark agent `i` (0-based): 0.9 down to 0.2 in equal steps.
pub fn benchmark_item_value(i: usize) -> f64 {
    0.9 - i as f64 * 0.7 / 9.0
}

/// Ten agents compete for one item. `S = {item, none}`, outcome `k` gives the
/// item to agent `k`, "none" is worth exactly 0 and item rewards are
/// `N(v_i, 0.5)` (variance 0.5).
pub fn single_item_benchmark() -> MarketInstance {
    let n = BENCHMARK_AGENTS;
    MarketInstance::new(
        vec!["item".into(), "none".into()],
        (1..=n).map(|k| format!("assign to agent {k}")).collect(),
        (0..n).map(|i| (0..n).map(|w| usize::from(w != i)).collect()).collect(),
        (0..n).map(|i| vec![benchmark_item_value(i), 0.0]).collect(),
        vec![0.0; n],
        0.5f64.sqrt(),
        n,
    )
    .and_then(|m| m.with_deterministic((0..n).map(|_| vec![false, true]).collect()))
    .expect("benchmark market is well formed")
}

/// How outcomes relate to allocations in a random market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `Ω = S^n`, every combination of per-agent allocations.
    Product,
    /// One slot: `S = {slot, none}`, outcomes give the slot to one agent or to nobody.
    SingleSlot,
}

/// Seeded random market. Agent values are uniform on `[0, 1]`, seller values
/// uniform on `[−0.5, 0.5]`, `σ = 0.5`.
pub fn random_instance(n: usize, num_allocations: usize, structure: Structure, seed: u64) -> Result<MarketInstance> {
    if n == 0 || num_allocations == 0 {
        return Err(input("random markets need n ≥ 1 and |S| ≥ 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (allocations, outcomes, agent_map, k): (Vec<String>, Vec<String>, Vec<Vec<usize>>, usize) = match structure {
        Structure::Product => {
            let size = (0..n)
                .try_fold(1usize, |acc, _| acc.checked_mul(num_allocations))
                .filter(|&s| s <= RANDOM_OUTCOME_LIMIT)
                .ok_or_else(|| input(format!("|S|^n exceeds {RANDOM_OUTCOME_LIMIT} outcomes")))?;
            let map = (0..n)
                .map(|i| {
                    let stride = num_allocations.pow(i as u32);
                    (0..size).map(|w| (w / stride) % num_allocations).collect()
                })
                .collect();
            let names = (0..size).map(|w| format!("w{w}")).collect();
            ((0..num_allocations).map(|s| format!("s{s}")).collect(), names, map, num_allocations)
        }
        Structure::SingleSlot => {
            if num_allocations != 2 {
                return Err(input("single-slot markets have exactly two allocations (slot, none)"));
            }
            let map = (0..n).map(|i| (0..=n).map(|w| usize::from(w != i)).collect()).collect();
            let mut names: Vec<String> = (1..=n).map(|k| format!("assign to agent {k}")).collect();
            names.push("unassigned".into());
            (vec!["slot".into(), "none".into()], names, map, n.max(2))
        }
    };
    let values = (0..n).map(|_| (0..num_allocations).map(|_| rng.random::<f64>()).collect()).collect();
    let seller = (0..outcomes.len()).map(|_| rng.random::<f64>() - 0.5).collect();
    MarketInstance::new(allocations, outcomes, agent_map, values, seller, RANDOM_SIGMA, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::vcg_solve;

    #[test]
    fn delta_example() {
        let pair = lower_bound_pair(2, 3, 1024).unwrap();
        assert!((pair.delta - 0.25).abs() < 1e-15);
        assert!(pair.delta < 0.5);
    }

    #[test]
    fn theta1_welfare() {
        for n in 2..6 {
            let pair = lower_bound_pair(n, n + 2, 200 * n).unwrap();
            let m = &pair.theta1;
            assert!((m.welfare(0).unwrap() - n as f64 / 2.0).abs() < 1e-12);
            for j in 1..=n {
                assert!((m.welfare(j).unwrap() - (n as f64 / 2.0 - 0.5)).abs() < 1e-12);
            }
            assert_eq!(vcg_solve(m).optimal_outcome, 0);
        }
    }

    #[test]
    fn theta2_with_delta_one_tenth() {
        // δ = 0.1 at n = 3 needs T = 16 / (4 · 0.001) = 4000.
        let pair = lower_bound_pair(3, 4, 4000).unwrap();
        assert!((pair.delta - 0.1).abs() < 1e-12);
        let sol = vcg_solve(&pair.theta2);
        assert!((sol.sum_without_agent_optima() - 3.6).abs() < 1e-12);
        for p in &sol.prices {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_differs_only_by_delta() {
        let n = 3;
        let pair = lower_bound_pair(n, 6, 1000).unwrap();
        for i in 0..n {
            for j in 0..6 {
                let a = pair.theta1.value(i, j);
                let b = pair.theta2.value(i, j);
                if (1..=n).contains(&j) && j != i + 1 {
                    assert!((b - a - pair.delta).abs() < 1e-15);
                } else {
                    assert_eq!(a, b);
                }
            }
        }
        for j in 1..=n {
            assert!(pair.theta1.welfare(0).unwrap() - pair.theta1.welfare(j).unwrap() >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn lower_bound_preconditions() {
        assert!(lower_bound_pair(1, 3, 10_000).is_err());
        assert!(lower_bound_pair(2, 2, 10_000).is_err());
        assert!(lower_bound_pair(2, 3, 256).is_err());
        assert!(lower_bound_pair(2, 3, 257).is_ok());
    }

    #[test]
    fn benchmark_values() {
        let m = single_item_benchmark();
        assert_eq!(m.n_agents(), 10);
        assert_eq!(m.value(0, 0), 0.9);
        assert!((m.value(9, 0) - 0.2).abs() < 1e-15);
        assert!(m.is_deterministic(4, 1));
        assert!(!m.is_deterministic(4, 0));
        let sol = vcg_solve(&m);
        assert_eq!(sol.optimal_outcome, 0);
        assert!((sol.prices[0] - benchmark_item_value(1)).abs() < 1e-15);
        assert!(sol.prices[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn random_is_deterministic_and_in_range() {
        let a = random_instance(3, 2, Structure::Product, 42).unwrap();
        let b = random_instance(3, 2, Structure::Product, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_instance(3, 2, Structure::Product, 43).unwrap());
        for i in 0..3 {
            assert!(a.agent_values(i).iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(random_instance(2, 3, Structure::Product, 0).unwrap().num_outcomes(), 9);
    }

    #[test]
    fn single_slot_shape() {
        let m = random_instance(4, 2, Structure::SingleSlot, 1).unwrap();
        assert_eq!(m.num_outcomes(), 5);
        assert_eq!(m.explore_rounds(), 4);
        assert!(random_instance(4, 3, Structure::SingleSlot, 1).is_err());
        assert_eq!(random_instance(1, 2, Structure::SingleSlot, 1).unwrap().explore_rounds(), 2);
    }

    #[test]
    fn oversized_product_is_rejected() {
        assert!(random_instance(30, 2, Structure::Product, 0).is_err());
    }
}
