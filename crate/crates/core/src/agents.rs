//! Reward generation and agent reporting strategies.
//!
//! Every `(agent, allocation, phase)` triple owns its own ChaCha stream, so the
//! `k`-th reward an agent receives at an allocation in explore (or exploit)
//! rounds is the same no matter which policy anyone follows. Policies only
//! change what gets reported. Explore schedules are fixed, so explore rewards
//! pair up round for round across runs with the same seed.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::estimator::{Participation, Phase};
use crate::market::MarketInstance;

/// What an agent sees about one past (or the current) round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub allocation: usize,
    pub price: f64,
    pub realized: f64,
    /// `None` for the current round, whose report is being decided.
    pub reported: Option<f64>,
}

/// Report rule for [`AgentPolicy::Scripted`].
///
/// Receives the agent's past rounds, the current round (with `reported = None`)
/// and a private random stream.
pub type ScriptFn = dyn Fn(&[HistoryEntry], &HistoryEntry, &mut dyn RngCore) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct Script(pub Arc<ScriptFn>);

impl Script {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[HistoryEntry], &HistoryEntry, &mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Script(..)")
    }
}

/// Stationary misreporting: the report depends only on the allocation and the
/// realised reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Misreport {
    /// `Y = factor · X` at every allocation.
    Scale { factor: f64 },
    /// `Y = scale[s] · X + shift[s]`.
    Affine { scale: Vec<f64>, shift: Vec<f64> },
    /// `Y ~ N(mean[s], sd[s]²)`, ignoring `X`.
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
}

impl Misreport {
    fn check(&self, num_allocations: usize) -> Result<()> {
        let ok = |v: &[f64]| v.len() == num_allocations && v.iter().all(|x| x.is_finite());
        match self {
            Misreport::Scale { factor } if factor.is_finite() => Ok(()),
            Misreport::Affine { scale, shift } if ok(scale) && ok(shift) => Ok(()),
            Misreport::Gaussian { mean, sd } if ok(mean) && ok(sd) && sd.iter().all(|&x| x >= 0.0) => Ok(()),
            _ => Err(input(format!("misreport parameters must be finite with one entry per allocation ({num_allocations})"))),
        }
    }

    fn apply(&self, allocation: usize, realized: f64, rng: &mut impl Rng) -> f64 {
        match self {
            Misreport::Scale { factor } => factor * realized,
            Misreport::Affine { scale, shift } => scale[allocation] * realized + shift[allocation],
            Misreport::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean[allocation] + sd[allocation] * z
            }
        }
    }
}

/// How an agent participates and what it reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentPolicy {
    TruthfulRewards,
    /// Bids the true value table once before round 1.
    TruthfulBids,
    FalseBids { bid: Vec<f64> },
    StationaryMisreport { misreport: Misreport },
    #[serde(skip)]
    Scripted(Script),
}

impl AgentPolicy {
    pub fn scripted<F>(f: F) -> Self
    where
        F: Fn(&[HistoryEntry], &HistoryEntry, &mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        AgentPolicy::Scripted(Script::new(f))
    }

    /// How the mechanism sees this agent in `instance`.
    pub fn participation(&self, instance: &MarketInstance, agent: usize) -> Participation {
        match self {
            AgentPolicy::TruthfulBids => Participation::ByBids(instance.agent_values(agent).to_vec()),
            AgentPolicy::FalseBids { bid } => Participation::ByBids(bid.clone()),
            _ => Participation::ByRewards,
        }
    }

    pub fn reports_rewards(&self) -> bool {
        !matches!(self, AgentPolicy::TruthfulBids | AgentPolicy::FalseBids { .. })
    }

    pub fn is_truthful(&self) -> bool {
        matches!(self, AgentPolicy::TruthfulRewards | AgentPolicy::TruthfulBids)
    }
}

/// Draws `X ~ N(v_i(s), σ²)`, or returns `v_i(s)` for deterministic pairs.
pub fn realize_reward(instance: &MarketInstance, agent: usize, allocation: usize, rng: &mut impl Rng) -> f64 {
    let mean = instance.value(agent, allocation);
    let sigma = instance.noise_sigma();
    if instance.is_deterministic(agent, allocation) || sigma == 0.0 {
        return mean;
    }
    let z: f64 = rng.sample(StandardNormal);
    mean + sigma * z
}

/// The report a policy produces for the current round; `None` for bidders.
pub fn report(
    policy: &AgentPolicy,
    history: &[HistoryEntry],
    current: &HistoryEntry,
    rng: &mut impl RngCore,
) -> Option<f64> {
    match policy {
        AgentPolicy::TruthfulRewards => Some(current.realized),
        AgentPolicy::TruthfulBids | AgentPolicy::FalseBids { .. } => None,
        AgentPolicy::StationaryMisreport { misreport } => Some(misreport.apply(current.allocation, current.realized, rng)),
        AgentPolicy::Scripted(script) => Some((script.0)(history, current, rng)),
    }
}

const POLICY_STREAM: u64 = u32::MAX as u64;

fn stream(seed: u64, agent: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((agent as u64) << 32) | slot);
    rng
}

/// The agents of one run: policies, random streams and observed histories.
#[derive(Debug, Clone)]
pub struct Population {
    policies: Vec<AgentPolicy>,
    /// `[agent][allocation][phase]`.
    reward_streams: Vec<Vec<[ChaCha8Rng; 2]>>,
    policy_streams: Vec<ChaCha8Rng>,
    histories: Vec<Vec<HistoryEntry>>,
}

impl Population {
    pub fn new(instance: &MarketInstance, policies: Vec<AgentPolicy>, seed: u64) -> Result<Self> {
        let n = instance.n_agents();
        let num_s = instance.num_allocations();
        if policies.len() != n {
            return Err(input(format!("{} policies for {n} agents", policies.len())));
        }
        for (i, p) in policies.iter().enumerate() {
            match p {
                AgentPolicy::FalseBids { bid } => {
                    if bid.len() != num_s || bid.iter().any(|b| !(0.0..=1.0).contains(b)) {
                        return Err(input(format!("agent {i}: bid needs {num_s} values in [0, 1]")));
                    }
                }
                AgentPolicy::StationaryMisreport { misreport } => misreport.check(num_s)?,
                _ => {}
            }
        }
        Ok(Self {
            policies,
            reward_streams: (0..n)
                .map(|i| {
                    (0..num_s as u64).map(|s| [stream(seed, i, 2 * s), stream(seed, i, 2 * s + 1)]).collect()
                })
                .collect(),
            policy_streams: (0..n).map(|i| stream(seed, i, POLICY_STREAM)).collect(),
            histories: vec![Vec::new(); n],
        })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[AgentPolicy] {
        &self.policies
    }

    pub fn history(&self, agent: usize) -> &[HistoryEntry] {
        &self.histories[agent]
    }

    /// Next reward for `agent` at `allocation` in a round of the given phase.
    pub fn realize(&mut self, instance: &MarketInstance, agent: usize, allocation: usize, phase: Phase) -> f64 {
        let slot = match phase {
            Phase::Explore => 0,
            Phase::Exploit => 1,
        };
        realize_reward(instance, agent, allocation, &mut self.reward_streams[agent][allocation][slot])
    }

    /// Decides the report for the current round and appends it to the history.
    pub fn report(&mut self, agent: usize, allocation: usize, price: f64, realized: f64) -> Option<f64> {
        let mut current = HistoryEntry { allocation, price, realized, reported: None };
        let y = report(&self.policies[agent], &self.histories[agent], &current, &mut self.policy_streams[agent]);
        current.reported = y;
        self.histories[agent].push(current);
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::single_item_benchmark;
    use crate::market::tests::single_item_pair;

    fn entry(allocation: usize, realized: f64) -> HistoryEntry {
        HistoryEntry { allocation, price: 0.0, realized, reported: None }
    }

    #[test]
    fn report_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(report(&AgentPolicy::TruthfulRewards, &[], &entry(0, 0.37), &mut rng), Some(0.37));
        let half = AgentPolicy::StationaryMisreport { misreport: Misreport::Scale { factor: 0.5 } };
        assert_eq!(report(&half, &[], &entry(0, 0.8), &mut rng), Some(0.4));
        assert_eq!(report(&AgentPolicy::TruthfulBids, &[], &entry(0, 0.8), &mut rng), None);
    }

    #[test]
    fn identity_misreport_matches_truth() {
        let id = AgentPolicy::StationaryMisreport {
            misreport: Misreport::Affine { scale: vec![1.0, 1.0], shift: vec![0.0, 0.0] },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for x in [-1.3, 0.0, 0.25, 2.0] {
            assert_eq!(report(&id, &[], &entry(1, x), &mut rng), Some(x));
        }
    }

    #[test]
    fn zero_noise_returns_mean() {
        let m = single_item_pair(0.9, 0.2);
        let m = MarketInstance::new(
            m.allocation_names().to_vec(),
            m.outcome_names().to_vec(),
            (0..2).map(|i| (0..3).map(|w| m.allocation_of(i, w)).collect()).collect(),
            vec![vec![0.9, 0.0], vec![0.2, 0.0]],
            vec![0.0; 3],
            0.0,
            2,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(realize_reward(&m, 0, 0, &mut rng), 0.9);
    }

    #[test]
    fn benchmark_none_is_exactly_zero() {
        let m = single_item_benchmark();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..10 {
            for _ in 0..100 {
                assert_eq!(realize_reward(&m, i, 1, &mut rng), 0.0);
            }
        }
    }

    #[test]
    fn sample_mean_concentrates() {
        let m = single_item_benchmark();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let mean = (0..draws).map(|_| realize_reward(&m, 0, 0, &mut rng)).sum::<f64>() / draws as f64;
        let tol = 4.0 * m.noise_sigma() / (draws as f64).sqrt();
        assert!((mean - 0.9).abs() < tol, "{mean}");
    }

    #[test]
    fn reward_streams_ignore_policy() {
        let m = single_item_benchmark();
        let mut truthful = Population::new(&m, vec![AgentPolicy::TruthfulRewards; 10], 9).unwrap();
        let mut policies = vec![AgentPolicy::TruthfulRewards; 10];
        policies[0] = AgentPolicy::StationaryMisreport { misreport: Misreport::Scale { factor: 0.5 } };
        policies[3] = AgentPolicy::TruthfulBids;
        let mut other = Population::new(&m, policies, 9).unwrap();
        for r in 0..50 {
            for i in 0..10 {
                let s = (r + i) % 2;
                let a = truthful.realize(&m, i, s, Phase::Exploit);
                let b = other.realize(&m, i, s, Phase::Exploit);
                assert_eq!(a, b);
                truthful.report(i, s, 0.0, a);
                other.report(i, s, 0.0, b);
            }
        }
    }

    #[test]
    fn streams_are_independent_per_pair() {
        let m = single_item_benchmark();
        let mut a = Population::new(&m, vec![AgentPolicy::TruthfulRewards; 10], 2).unwrap();
        let mut b = a.clone();
        // Extra draws for agent 1 must not shift agent 0's sequence.
        for _ in 0..7 {
            b.realize(&m, 1, 0, Phase::Explore);
        }
        for _ in 0..20 {
            assert_eq!(a.realize(&m, 0, 0, Phase::Explore), b.realize(&m, 0, 0, Phase::Explore));
        }
        // Nor may exploit draws shift explore draws for the same pair.
        for _ in 0..5 {
            b.realize(&m, 0, 0, Phase::Exploit);
        }
        for _ in 0..20 {
            assert_eq!(a.realize(&m, 0, 0, Phase::Explore), b.realize(&m, 0, 0, Phase::Explore));
        }
    }

    #[test]
    fn scripted_sees_history() {
        let m = single_item_benchmark();
        let policy = AgentPolicy::scripted(|hist, _cur, _rng| hist.len() as f64);
        let mut policies = vec![AgentPolicy::TruthfulRewards; 10];
        policies[2] = policy;
        let mut pop = Population::new(&m, policies, 0).unwrap();
        for r in 0..5 {
            assert_eq!(pop.report(2, 0, 0.1, 0.5), Some(r as f64));
        }
        assert_eq!(pop.history(2).len(), 5);
        assert_eq!(pop.history(2)[4].reported, Some(4.0));
    }

    #[test]
    fn invalid_policies_are_rejected() {
        let m = single_item_benchmark();
        let mut policies = vec![AgentPolicy::TruthfulRewards; 10];
        policies[0] = AgentPolicy::FalseBids { bid: vec![0.5] };
        assert!(Population::new(&m, policies, 0).is_err());
        assert!(Population::new(&m, vec![AgentPolicy::TruthfulRewards; 3], 0).is_err());
    }

    #[test]
    fn policy_json_round_trip() {
        let p = AgentPolicy::StationaryMisreport { misreport: Misreport::Scale { factor: 0.5 } };
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"stationary_misreport","misreport":{"kind":"scale","factor":0.5}}"#);
        let back: AgentPolicy = serde_json::from_str(&json).unwrap();
        assert!(matches!(back, AgentPolicy::StationaryMisreport { misreport: Misreport::Scale { factor } } if factor == 0.5));
        assert!(serde_json::from_str::<AgentPolicy>(r#"{"kind":"false_bids","bid":[0.1,0.0],"x":1}"#).is_err());
    }
}
