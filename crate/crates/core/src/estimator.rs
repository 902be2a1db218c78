//! Per-agent reward statistics and the clipped-mean confidence intervals used
//! for outcome selection and pricing.
//!
//! For an agent participating by rewards the interval at allocation `s` is
//!
//! ```text
//! mean  = clip(sum / N, 0, 1)
//! width = σ · β_t / √N,   β_t = sqrt(5 ln(t − qK + 1) + 2 ln |S|)
//! (lcb, ucb) = (mean − width, mean + width)
//! ```
//!
//! Only the mean is clipped. Agents participating by bids get the degenerate
//! interval `(b(s), b(s), b(s))`.

use serde::{Deserialize, Serialize};

use crate::error::{input, precondition, usage, Result};

/// Which rounds feed the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstMethod {
    /// Explore-then-commit: one retained report per allocation per explore phase.
    #[serde(rename = "ETC")]
    Etc,
    /// Optimistic: every report from every round.
    #[serde(rename = "OPT")]
    Opt,
}

impl EstMethod {
    pub const ALL: [EstMethod; 2] = [EstMethod::Etc, EstMethod::Opt];

    pub fn as_str(self) -> &'static str {
        match self {
            EstMethod::Etc => "ETC",
            EstMethod::Opt => "OPT",
        }
    }
}

impl std::fmt::Display for EstMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub est_method: EstMethod,
    pub sigma: f64,
    pub num_allocations: usize,
    /// Length `K` of every explore phase.
    pub explore_rounds: usize,
}

impl EstimatorConfig {
    pub fn new(est_method: EstMethod, sigma: f64, num_allocations: usize, explore_rounds: usize) -> Result<Self> {
        if num_allocations == 0 {
            return Err(input("the estimator needs at least one allocation"));
        }
        if explore_rounds == 0 {
            return Err(input("explore phases need at least one round"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(input(format!("sigma must be finite and non-negative, got {sigma}")));
        }
        Ok(Self { est_method, sigma, num_allocations, explore_rounds })
    }
}

/// Round phase within a bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Explore,
    Exploit,
}

/// How an agent communicates its values to the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Participation {
    ByRewards,
    ByBids(Vec<f64>),
}

/// `(lcb, mean, ucb)` at one allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confidence {
    pub lcb: f64,
    pub mean: f64,
    pub ucb: f64,
}

impl Confidence {
    pub fn point(v: f64) -> Self {
        Self { lcb: v, mean: v, ucb: v }
    }

    pub fn half_width(&self) -> f64 {
        self.ucb - self.mean
    }
}

/// `β_t = sqrt(5 ln(t − qK + 1) + 2 ln |S|)`.
pub fn confidence_multiplier(t: usize, q: usize, explore_rounds: usize, num_allocations: usize) -> Result<f64> {
    let offset = (t + 1)
        .checked_sub(q * explore_rounds)
        .filter(|&v| v >= 1)
        .ok_or_else(|| precondition(format!("t − qK + 1 must be at least 1 (t = {t}, q = {q}, K = {explore_rounds})")))?;
    if num_allocations == 0 {
        return Err(input("|S| must be positive"));
    }
    Ok((5.0 * (offset as f64).ln() + 2.0 * (num_allocations as f64).ln()).sqrt())
}

/// Clipped mean of `sum / count` with half-width `σ β / √count`.
pub(crate) fn interval(sum: f64, count: u64, sigma: f64, beta: f64) -> Confidence {
    let mean = (sum / count as f64).clamp(0.0, 1.0);
    let width = sigma * beta / (count as f64).sqrt();
    Confidence { lcb: mean - width, mean, ucb: mean + width }
}

/// Reward statistics for a single agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStats {
    participation: Participation,
    counts: Vec<u64>,
    sums: Vec<f64>,
    explore_seen: Vec<bool>,
}

impl AgentStats {
    /// Fresh statistics for an agent participating by rewards.
    pub fn new(num_allocations: usize) -> Self {
        Self {
            participation: Participation::ByRewards,
            counts: vec![0; num_allocations],
            sums: vec![0.0; num_allocations],
            explore_seen: vec![false; num_allocations],
        }
    }

    pub fn participation(&self) -> &Participation {
        &self.participation
    }

    pub fn by_bids(&self) -> bool {
        matches!(self.participation, Participation::ByBids(_))
    }

    /// `N_it(s)`.
    pub fn count(&self, allocation: usize) -> u64 {
        self.counts[allocation]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Switches the agent to bidding. Bids are accepted only before the first round.
    pub fn set_bid(&mut self, bid: Vec<f64>, rounds_played: usize) -> Result<()> {
        if rounds_played > 0 {
            return Err(usage(format!("bids must be submitted before round 1 (already at round {rounds_played})")));
        }
        if bid.len() != self.counts.len() {
            return Err(input(format!("bid has {} entries, expected {}", bid.len(), self.counts.len())));
        }
        if let Some(b) = bid.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(input(format!("bid value {b} outside [0, 1]")));
        }
        self.participation = Participation::ByBids(bid);
        Ok(())
    }

    /// Clears the per-phase retention flags; call at the start of every explore phase.
    pub fn begin_explore_phase(&mut self) {
        self.explore_seen.iter_mut().for_each(|f| *f = false);
    }

    /// Feeds one reported reward. Returns whether the report was retained.
    ///
    /// Under ETC only the first report per allocation in each explore phase is
    /// kept; under OPT every report is kept.
    pub fn record_reward(
        &mut self,
        config: &EstimatorConfig,
        allocation: usize,
        reported: f64,
        phase: Phase,
    ) -> Result<bool> {
        if self.by_bids() {
            return Err(usage("cannot record rewards for an agent participating by bids"));
        }
        if !reported.is_finite() {
            return Err(input(format!("reported reward {reported} is not finite")));
        }
        if allocation >= self.counts.len() {
            return Err(input(format!("allocation {allocation} out of range")));
        }
        let retain = match (config.est_method, phase) {
            (EstMethod::Opt, _) => true,
            (EstMethod::Etc, Phase::Exploit) => false,
            (EstMethod::Etc, Phase::Explore) => !self.explore_seen[allocation],
        };
        if phase == Phase::Explore {
            self.explore_seen[allocation] = true;
        }
        if retain {
            self.counts[allocation] += 1;
            self.sums[allocation] += reported;
        }
        Ok(retain)
    }

    /// Confidence triple at `allocation` for round `t` of bracket `q`.
    pub fn confidence(&self, config: &EstimatorConfig, allocation: usize, t: usize, q: usize) -> Result<Confidence> {
        if allocation >= self.counts.len() {
            return Err(input(format!("allocation {allocation} out of range")));
        }
        match &self.participation {
            Participation::ByBids(bid) => Ok(Confidence::point(bid[allocation])),
            Participation::ByRewards => {
                let n = self.counts[allocation];
                if n == 0 {
                    return Err(precondition(format!("no retained reports for allocation {allocation}")));
                }
                let beta = confidence_multiplier(t, q, config.explore_rounds, config.num_allocations)?;
                Ok(interval(self.sums[allocation], n, config.sigma, beta))
            }
        }
    }

    /// Confidence triples for every allocation.
    pub fn confidence_table(&self, config: &EstimatorConfig, t: usize, q: usize) -> Result<Vec<Confidence>> {
        (0..self.counts.len()).map(|s| self.confidence(config, s, t, q)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn cfg(est: EstMethod, sigma: f64, num_s: usize) -> EstimatorConfig {
        EstimatorConfig::new(est, sigma, num_s, 2).unwrap()
    }

    #[test]
    fn etc_keeps_first_explore_report() {
        let c = cfg(EstMethod::Etc, 1.0, 2);
        let mut st = AgentStats::new(2);
        st.begin_explore_phase();
        assert!(st.record_reward(&c, 0, 0.3, Phase::Explore).unwrap());
        assert!(!st.record_reward(&c, 0, 0.9, Phase::Explore).unwrap());
        assert_eq!(st.count(0), 1);
        assert_eq!(st.sums[0], 0.3);
        // The next explore phase retains again.
        st.begin_explore_phase();
        assert!(st.record_reward(&c, 0, 0.5, Phase::Explore).unwrap());
        assert_eq!(st.count(0), 2);
    }

    #[test]
    fn etc_ignores_exploit_reports() {
        let c = cfg(EstMethod::Etc, 1.0, 2);
        let mut st = AgentStats::new(2);
        st.begin_explore_phase();
        st.record_reward(&c, 1, 0.4, Phase::Explore).unwrap();
        let before = st.clone();
        assert!(!st.record_reward(&c, 1, 0.8, Phase::Exploit).unwrap());
        assert_eq!(st, before);
    }

    #[test]
    fn opt_keeps_every_report() {
        let c = cfg(EstMethod::Opt, 1.0, 2);
        let mut st = AgentStats::new(2);
        st.begin_explore_phase();
        st.record_reward(&c, 0, 0.3, Phase::Explore).unwrap();
        st.record_reward(&c, 0, 0.3, Phase::Explore).unwrap();
        st.record_reward(&c, 0, 0.6, Phase::Exploit).unwrap();
        assert_eq!(st.count(0), 3);
    }

    #[test]
    fn record_errors() {
        let c = cfg(EstMethod::Opt, 1.0, 2);
        let mut st = AgentStats::new(2);
        assert!(matches!(st.record_reward(&c, 0, f64::NAN, Phase::Explore), Err(Error::Input(_))));
        st.set_bid(vec![0.1, 0.2], 0).unwrap();
        assert!(matches!(st.record_reward(&c, 0, 0.5, Phase::Explore), Err(Error::Usage(_))));
    }

    #[test]
    fn bids_give_point_intervals() {
        let c = cfg(EstMethod::Etc, 1.0, 2);
        let mut st = AgentStats::new(2);
        st.set_bid(vec![0.4, 0.0], 0).unwrap();
        assert_eq!(st.confidence(&c, 0, 10, 1).unwrap(), Confidence::point(0.4));
        assert_eq!(st.confidence(&c, 1, 10, 1).unwrap(), Confidence::point(0.0));
    }

    #[test]
    fn bid_timing_and_range() {
        let mut st = AgentStats::new(2);
        assert!(matches!(st.set_bid(vec![0.5, 0.5], 5), Err(Error::Usage(_))));
        assert!(matches!(st.set_bid(vec![1.5, 0.5], 0), Err(Error::Input(_))));
        assert!(matches!(st.set_bid(vec![0.5], 0), Err(Error::Input(_))));
    }

    #[test]
    fn zero_multiplier_collapses_interval() {
        // t − qK + 1 = 1 and |S| = 1.
        let c = EstimatorConfig::new(EstMethod::Opt, 1.0, 1, 2).unwrap();
        assert_eq!(confidence_multiplier(2, 1, 2, 1).unwrap(), 0.0);
        let mut st = AgentStats::new(1);
        st.record_reward(&c, 0, 0.25, Phase::Explore).unwrap();
        assert_eq!(st.confidence(&c, 0, 2, 1).unwrap(), Confidence::point(0.25));
    }

    #[test]
    fn clipped_mean_with_unit_multiplier() {
        // Samples {1.5, 0.7}, σ = 1, β = 1: mean clips to 1, width 1/√2.
        let ci = interval(1.5 + 0.7, 2, 1.0, 1.0);
        assert_eq!(ci.mean, 1.0);
        assert!((ci.lcb - 0.292_893_218_813_452_5).abs() < 1e-12);
        assert!((ci.ucb - 1.707_106_781_186_547_5).abs() < 1e-12);

        // Same data through the stats path, scaled by the round's multiplier.
        let c = EstimatorConfig::new(EstMethod::Opt, 1.0, 1, 1).unwrap();
        let mut st = AgentStats::new(1);
        st.record_reward(&c, 0, 1.5, Phase::Explore).unwrap();
        st.record_reward(&c, 0, 0.7, Phase::Explore).unwrap();
        let beta = confidence_multiplier(5, 1, 1, 1).unwrap();
        let via_stats = st.confidence(&c, 0, 5, 1).unwrap();
        assert!((via_stats.half_width() / beta - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn zero_count_is_a_precondition_error() {
        let c = cfg(EstMethod::Etc, 1.0, 2);
        let st = AgentStats::new(2);
        assert!(matches!(st.confidence(&c, 0, 3, 1), Err(Error::Precondition(_))));
    }

    #[test]
    fn multiplier_rejects_early_rounds() {
        assert!(confidence_multiplier(1, 1, 2, 2).is_err());
        assert!(confidence_multiplier(3, 1, 2, 2).is_ok());
    }

    proptest! {
        #[test]
        fn interval_is_ordered_and_mean_clipped(
            reports in prop::collection::vec(-3.0f64..4.0, 1..20),
            sigma in 0.0f64..2.0,
            extra in 0usize..500,
        ) {
            let c = EstimatorConfig::new(EstMethod::Opt, sigma, 3, 2).unwrap();
            let mut st = AgentStats::new(3);
            for r in &reports {
                st.record_reward(&c, 1, *r, Phase::Exploit).unwrap();
            }
            let t = 3 + extra;
            let ci = st.confidence(&c, 1, t, 1).unwrap();
            prop_assert!(ci.lcb <= ci.mean && ci.mean <= ci.ucb);
            prop_assert!((0.0..=1.0).contains(&ci.mean));
            let beta = confidence_multiplier(t, 1, 2, 3).unwrap();
            let expected = 2.0 * sigma * beta / (reports.len() as f64).sqrt();
            prop_assert!(((ci.ucb - ci.lcb) - expected).abs() < 1e-12);
        }

        #[test]
        fn multiplier_non_decreasing_in_t(q in 1usize..50, k in 1usize..10, s in 1usize..6, t0 in 0usize..1000) {
            let base = q * k;
            let a = confidence_multiplier(base + t0, q, k, s).unwrap();
            let b = confidence_multiplier(base + t0 + 1, q, k, s).unwrap();
            prop_assert!(a <= b);
        }
    }
}
