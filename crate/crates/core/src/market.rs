//! Static market model and the full-information VCG oracle.
//!
//! Outcomes and allocations are dense indices. Each agent carries a table
//! `agent_map[i][outcome] -> allocation`, which covers both product markets
//! (`Ω = S^n`) and shared-slot markets where many outcomes look the same to an
//! agent. Welfare maximisation is exact enumeration over `Ω`; ties always
//! resolve to the lowest outcome index.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

/// Above this many outcomes `max_welfare_upper_bound` falls back to the loose bound.
pub const ENUMERATION_LIMIT: usize = 1 << 22;

/// A market with `n` agents, outcome set `Ω` and allocation set `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct MarketInstance {
    allocations: Vec<String>,
    outcomes: Vec<String>,
    agent_map: Vec<Vec<usize>>,
    agent_values: Vec<Vec<f64>>,
    seller_values: Vec<f64>,
    noise_sigma: f64,
    explore_rounds: usize,
    deterministic: Vec<Vec<bool>>,
}

/// On-disk JSON layout of a [`MarketInstance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    n_agents: usize,
    allocations: Vec<String>,
    outcomes: Vec<String>,
    agent_map: Vec<Vec<usize>>,
    agent_values: Vec<Vec<f64>>,
    seller_values: Vec<f64>,
    noise_sigma: f64,
    #[serde(rename = "explore_rounds_K")]
    explore_rounds_k: usize,
    /// Optional `n × |S|` flags marking allocations whose reward is exactly the value.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    deterministic_rewards: Vec<Vec<bool>>,
}

impl TryFrom<InstanceDoc> for MarketInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        if doc.agent_map.len() != doc.n_agents {
            return Err(input(format!(
                "n_agents = {} but agent_map has {} rows",
                doc.n_agents,
                doc.agent_map.len()
            )));
        }
        let mut instance = MarketInstance::new(
            doc.allocations,
            doc.outcomes,
            doc.agent_map,
            doc.agent_values,
            doc.seller_values,
            doc.noise_sigma,
            doc.explore_rounds_k,
        )?;
        if !doc.deterministic_rewards.is_empty() {
            instance = instance.with_deterministic(doc.deterministic_rewards)?;
        }
        Ok(instance)
    }
}

impl From<MarketInstance> for InstanceDoc {
    fn from(m: MarketInstance) -> Self {
        let any_deterministic = m.deterministic.iter().flatten().any(|&d| d);
        InstanceDoc {
            n_agents: m.agent_map.len(),
            allocations: m.allocations,
            outcomes: m.outcomes,
            agent_map: m.agent_map,
            agent_values: m.agent_values,
            seller_values: m.seller_values,
            noise_sigma: m.noise_sigma,
            explore_rounds_k: m.explore_rounds,
            deterministic_rewards: if any_deterministic { m.deterministic } else { Vec::new() },
        }
    }
}

impl MarketInstance {
    /// Builds and validates an instance.
    ///
    /// `agent_map` is `n × |Ω|`, `agent_values` is `n × |S|` with entries in
    /// `[0, 1]`, and `seller_values` has one (possibly negative) entry per outcome.
    pub fn new(
        allocations: Vec<String>,
        outcomes: Vec<String>,
        agent_map: Vec<Vec<usize>>,
        agent_values: Vec<Vec<f64>>,
        seller_values: Vec<f64>,
        noise_sigma: f64,
        explore_rounds: usize,
    ) -> Result<Self> {
        let n = agent_map.len();
        let num_s = allocations.len();
        let num_o = outcomes.len();
        if n == 0 {
            return Err(input("a market needs at least one agent"));
        }
        if num_s == 0 || num_o == 0 {
            return Err(input("allocation and outcome sets must be non-empty"));
        }
        if agent_values.len() != n {
            return Err(input(format!("agent_values has {} rows, expected {n}", agent_values.len())));
        }
        if seller_values.len() != num_o {
            return Err(input(format!(
                "seller_values has {} entries, expected {num_o}",
                seller_values.len()
            )));
        }
        for (i, row) in agent_map.iter().enumerate() {
            if row.len() != num_o {
                return Err(input(format!("agent_map row {i} has {} entries, expected {num_o}", row.len())));
            }
            if let Some(&s) = row.iter().find(|&&s| s >= num_s) {
                return Err(input(format!("agent_map row {i} refers to allocation {s} (|S| = {num_s})")));
            }
        }
        for (i, row) in agent_values.iter().enumerate() {
            if row.len() != num_s {
                return Err(input(format!("agent_values row {i} has {} entries, expected {num_s}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(input(format!("agent {i} has value {v} outside [0, 1]")));
            }
        }
        if let Some(v) = seller_values.iter().find(|v| !v.is_finite()) {
            return Err(input(format!("seller value {v} is not finite")));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(input(format!("noise_sigma must be finite and non-negative, got {noise_sigma}")));
        }
        if explore_rounds == 0 {
            return Err(input("explore_rounds_K must be positive"));
        }
        Ok(Self {
            allocations,
            outcomes,
            agent_map,
            agent_values,
            seller_values,
            noise_sigma,
            explore_rounds,
            deterministic: vec![vec![false; num_s]; n],
        })
    }

    /// Marks `(agent, allocation)` pairs whose realised reward equals the value exactly.
    pub fn with_deterministic(mut self, flags: Vec<Vec<bool>>) -> Result<Self> {
        if flags.len() != self.n_agents() || flags.iter().any(|r| r.len() != self.num_allocations()) {
            return Err(input("deterministic_rewards must be an n × |S| table"));
        }
        self.deterministic = flags;
        Ok(self)
    }

    pub fn n_agents(&self) -> usize {
        self.agent_map.len()
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn num_allocations(&self) -> usize {
        self.allocations.len()
    }

    pub fn allocation_names(&self) -> &[String] {
        &self.allocations
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcomes
    }

    /// `φ_i(ω)`.
    #[inline]
    pub fn allocation_of(&self, agent: usize, outcome: usize) -> usize {
        self.agent_map[agent][outcome]
    }

    /// `v_i(s)`.
    #[inline]
    pub fn value(&self, agent: usize, allocation: usize) -> f64 {
        self.agent_values[agent][allocation]
    }

    /// `v_i(φ_i(ω))`.
    #[inline]
    pub fn value_at(&self, agent: usize, outcome: usize) -> f64 {
        self.agent_values[agent][self.agent_map[agent][outcome]]
    }

    pub fn agent_values(&self, agent: usize) -> &[f64] {
        &self.agent_values[agent]
    }

    #[inline]
    pub fn seller_value(&self, outcome: usize) -> f64 {
        self.seller_values[outcome]
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// `K`, the number of rounds in every explore phase.
    pub fn explore_rounds(&self) -> usize {
        self.explore_rounds
    }

    pub fn is_deterministic(&self, agent: usize, allocation: usize) -> bool {
        self.deterministic[agent][allocation]
    }

    pub fn check_outcome(&self, outcome: usize) -> Result<()> {
        if outcome >= self.num_outcomes() {
            return Err(input(format!("outcome {outcome} out of range (|Ω| = {})", self.num_outcomes())));
        }
        Ok(())
    }

    pub fn check_agent(&self, agent: usize) -> Result<()> {
        if agent >= self.n_agents() {
            return Err(input(format!("agent {agent} out of range (n = {})", self.n_agents())));
        }
        Ok(())
    }

    pub fn check_allocation(&self, allocation: usize) -> Result<()> {
        if allocation >= self.num_allocations() {
            return Err(input(format!(
                "allocation {allocation} out of range (|S| = {})",
                self.num_allocations()
            )));
        }
        Ok(())
    }

    /// `v_0(ω) + Σ_{j ≠ skip} table(j, φ_j(ω))`, summed in agent order.
    ///
    /// Every welfare-like quantity in the crate goes through this function so
    /// that identical inputs produce bit-identical sums.
    #[inline]
    pub(crate) fn combine<F>(&self, outcome: usize, skip: Option<usize>, per_agent: F) -> f64
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut total = self.seller_values[outcome];
        for (j, row) in self.agent_map.iter().enumerate() {
            if Some(j) != skip {
                total += per_agent(j, row[outcome]);
            }
        }
        total
    }

    #[inline]
    pub(crate) fn welfare_unchecked(&self, outcome: usize) -> f64 {
        self.combine(outcome, None, |j, s| self.agent_values[j][s])
    }

    #[inline]
    pub(crate) fn welfare_without_unchecked(&self, agent: usize, outcome: usize) -> f64 {
        self.combine(outcome, Some(agent), |j, s| self.agent_values[j][s])
    }

    /// `Val(ω) = v_0(ω) + Σ_i v_i(φ_i(ω))`.
    pub fn welfare(&self, outcome: usize) -> Result<f64> {
        self.check_outcome(outcome)?;
        Ok(self.welfare_unchecked(outcome))
    }

    /// `Val_{-i}(ω) = v_0(ω) + Σ_{j≠i} v_j(φ_j(ω))`.
    pub fn welfare_without(&self, agent: usize, outcome: usize) -> Result<f64> {
        self.check_agent(agent)?;
        self.check_outcome(outcome)?;
        Ok(self.welfare_without_unchecked(agent, outcome))
    }
}

/// Index and value of the maximum of `f` over `0..len`; ties go to the lowest index.
pub(crate) fn argmax<F: FnMut(usize) -> f64>(len: usize, mut f: F) -> (usize, f64) {
    let mut best = (0, f(0));
    for k in 1..len {
        let v = f(k);
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// Outcome, prices and utilities of the full-information VCG mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcgSolution {
    pub optimal_outcome: usize,
    pub prices: Vec<f64>,
    pub agent_utilities: Vec<f64>,
    pub seller_utility: f64,
    pub max_welfare: f64,
    /// Per agent, `(ω*_{-i}, Val_{-i}(ω*_{-i}))`.
    pub without_agent_optima: Vec<(usize, f64)>,
}

impl VcgSolution {
    pub fn n_agents(&self) -> usize {
        self.prices.len()
    }

    /// `Σ_i Val_{-i}(ω*_{-i})`.
    pub fn sum_without_agent_optima(&self) -> f64 {
        self.without_agent_optima.iter().map(|&(_, v)| v).sum()
    }
}

/// Solves the VCG mechanism by exhaustive enumeration of `Ω`.
pub fn vcg_solve(instance: &MarketInstance) -> VcgSolution {
    let num_o = instance.num_outcomes();
    let (optimal, max_welfare) = argmax(num_o, |w| instance.welfare_unchecked(w));
    let mut prices = Vec::with_capacity(instance.n_agents());
    let mut agent_utilities = Vec::with_capacity(instance.n_agents());
    let mut without = Vec::with_capacity(instance.n_agents());
    for i in 0..instance.n_agents() {
        let (best_without, best_value) = argmax(num_o, |w| instance.welfare_without_unchecked(i, w));
        let price = best_value - instance.welfare_without_unchecked(i, optimal);
        prices.push(price);
        agent_utilities.push(instance.value_at(i, optimal) - price);
        without.push((best_without, best_value));
    }
    let seller_utility = instance.seller_value(optimal) + prices.iter().sum::<f64>();
    VcgSolution {
        optimal_outcome: optimal,
        prices,
        agent_utilities,
        seller_utility,
        max_welfare,
        without_agent_optima: without,
    }
}

/// How `max_welfare_upper_bound` obtained its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `max_ω Val(ω)` by enumeration.
    Exact,
    /// `max(0, max_ω v_0(ω)) + n`.
    Loose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareBound {
    pub value: f64,
    pub kind: BoundKind,
}

/// `Vmax`, an upper bound on the expected welfare of any outcome.
pub fn max_welfare_upper_bound(instance: &MarketInstance) -> WelfareBound {
    if instance.num_outcomes() <= ENUMERATION_LIMIT {
        let (_, value) = argmax(instance.num_outcomes(), |w| instance.welfare_unchecked(w));
        WelfareBound { value, kind: BoundKind::Exact }
    } else {
        let seller_max = instance.seller_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        WelfareBound {
            value: seller_max.max(0.0) + instance.n_agents() as f64,
            kind: BoundKind::Loose,
        }
    }
}
