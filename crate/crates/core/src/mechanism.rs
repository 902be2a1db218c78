//! The learning VCG mechanism: bracket schedule, explore-phase assignment,
//! optimistic outcome selection and confidence-bound pricing.
//!
//! Rounds are grouped into brackets. Bracket `q` opens with `K` explore rounds
//! (a fixed covering schedule, zero prices) followed by `⌊(5/6) K √q⌋` exploit
//! rounds. An exploit round picks `argmax_ω v_0(ω) + Σ_i ucb_i(φ_i(ω))` and
//! charges
//!
//! ```text
//! p_i = max_ω F_{-i}(ω) − G_{-i}(ω_t)
//! F_{-i}(ω) = v_0(ω) + Σ_{j≠i} f_j(φ_j(ω)),  G_{-i}(ω) = v_0(ω) + Σ_{j≠i} g_j(φ_j(ω))
//! ```
//!
//! with `(f, g) = (lcb, ucb)` for agent-favourable pricing and `(ucb, lcb)` for
//! seller-favourable pricing.

use serde::{Deserialize, Serialize};

use crate::agents::Population;
use crate::error::{input, usage, Error, Result};
use crate::estimator::{AgentStats, Confidence, EstMethod, EstimatorConfig, Participation, Phase};
use crate::market::{argmax, MarketInstance};

/// Pricing rule for exploit rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PriceMethod {
    /// Agent-favourable: `f = lcb`, `g = ucb`. Prices can be negative.
    #[serde(rename = "AGE")]
    Age,
    /// Seller-favourable: `f = ucb`, `g = lcb`.
    #[serde(rename = "SEL")]
    Sel,
}

impl PriceMethod {
    pub const ALL: [PriceMethod; 2] = [PriceMethod::Age, PriceMethod::Sel];

    pub fn as_str(self) -> &'static str {
        match self {
            PriceMethod::Age => "AGE",
            PriceMethod::Sel => "SEL",
        }
    }
}

impl std::fmt::Display for PriceMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub est_method: EstMethod,
    pub price_method: PriceMethod,
}

impl MechanismConfig {
    pub fn new(est_method: EstMethod, price_method: PriceMethod) -> Self {
        Self { est_method, price_method }
    }

    /// The four `(est, price)` combinations in row-major order.
    pub fn grid() -> [MechanismConfig; 4] {
        [
            Self::new(EstMethod::Etc, PriceMethod::Age),
            Self::new(EstMethod::Etc, PriceMethod::Sel),
            Self::new(EstMethod::Opt, PriceMethod::Age),
            Self::new(EstMethod::Opt, PriceMethod::Sel),
        ]
    }

    /// Short label such as `ETC-AGE`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.est_method, self.price_method)
    }
}

/// Where a round sits in the bracket schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketPosition {
    /// 1-based global round index.
    pub round_t: usize,
    /// 1-based bracket index.
    pub bracket_q: usize,
    pub phase: Phase,
    /// 0-based offset inside the current phase.
    pub offset: usize,
}

/// `(K, ⌊(5/6) K √q⌋)`.
pub fn bracket_lengths(q: usize, k: usize) -> (usize, usize) {
    assert!(q >= 1 && k >= 1, "bracket and explore length are 1-based");
    // Largest L with 36 L² ≤ 25 K² q, which is exactly ⌊5 K √q / 6⌋.
    let target = 25u128 * (k as u128) * (k as u128) * q as u128;
    let mut l = (5.0 * k as f64 * (q as f64).sqrt() / 6.0).floor() as u128;
    while 36 * l * l > target {
        l -= 1;
    }
    while 36 * (l + 1) * (l + 1) <= target {
        l += 1;
    }
    (k, l as usize)
}

/// Round counter that walks the bracket schedule one round at a time.
#[derive(Debug, Clone)]
pub struct BracketClock {
    k: usize,
    next: BracketPosition,
    exploit_len: usize,
}

impl BracketClock {
    pub fn new(k: usize) -> Self {
        assert!(k >= 1);
        Self {
            k,
            next: BracketPosition { round_t: 1, bracket_q: 1, phase: Phase::Explore, offset: 0 },
            exploit_len: bracket_lengths(1, k).1,
        }
    }

    /// Position of the round that `advance` will return next.
    pub fn peek(&self) -> BracketPosition {
        self.next
    }

    pub fn advance(&mut self) -> BracketPosition {
        let current = self.next;
        let mut n = current;
        n.round_t += 1;
        n.offset += 1;
        let phase_len = match n.phase {
            Phase::Explore => self.k,
            Phase::Exploit => self.exploit_len,
        };
        if n.offset >= phase_len {
            n.offset = 0;
            match n.phase {
                Phase::Explore if self.exploit_len > 0 => n.phase = Phase::Exploit,
                _ => {
                    n.phase = Phase::Explore;
                    n.bracket_q += 1;
                    self.exploit_len = bracket_lengths(n.bracket_q, self.k).1;
                }
            }
        }
        self.next = n;
        current
    }
}

impl Iterator for BracketClock {
    type Item = BracketPosition;

    fn next(&mut self) -> Option<BracketPosition> {
        Some(self.advance())
    }
}

/// Locates round `t` (1-based) in the bracket schedule with explore length `k`.
pub fn phase_of_round(t: usize, k: usize) -> Result<BracketPosition> {
    if t == 0 {
        return Err(input("rounds are 1-based"));
    }
    if k == 0 {
        return Err(input("explore length K must be positive"));
    }
    let mut before = 0usize; // T_{q-1}
    let mut q = 1usize;
    loop {
        let (explore, exploit) = bracket_lengths(q, k);
        let within = t - before;
        if within <= explore {
            return Ok(BracketPosition { round_t: t, bracket_q: q, phase: Phase::Explore, offset: within - 1 });
        }
        if within <= explore + exploit {
            return Ok(BracketPosition {
                round_t: t,
                bracket_q: q,
                phase: Phase::Exploit,
                offset: within - explore - 1,
            });
        }
        before += explore + exploit;
        q += 1;
    }
}

/// `T_q`, the number of rounds completed after `q` full brackets.
pub fn rounds_after_brackets(q: usize, k: usize) -> usize {
    (1..=q).map(|m| {
        let (e, x) = bracket_lengths(m, k);
        e + x
    }).sum()
}

const SCHEDULE_SEARCH_BUDGET: usize = 2_000_000;

/// Builds a length-`K` outcome sequence that gives every agent every allocation.
///
/// A greedy cover (most newly covered pairs, lowest index on ties) is tried
/// first. If it is shorter than `K` it is repeated cyclically; if it is longer,
/// a bounded exact search looks for a cover of length `K`.
pub fn build_explore_schedule(instance: &MarketInstance) -> Result<Vec<usize>> {
    let k = instance.explore_rounds();
    let greedy = greedy_cover(instance);
    let cover = if greedy.len() <= k {
        greedy
    } else {
        exact_cover(instance, k).ok_or_else(|| {
            Error::Instance(format!(
                "no explore schedule of length K = {k} covers every (agent, allocation) pair (greedy needs {})",
                greedy.len()
            ))
        })?
    };
    Ok(cover.iter().copied().cycle().take(k).collect())
}

fn greedy_cover(instance: &MarketInstance) -> Vec<usize> {
    let (n, num_s, num_o) = (instance.n_agents(), instance.num_allocations(), instance.num_outcomes());
    let mut covered = vec![vec![false; num_s]; n];
    let mut remaining = n * num_s;
    let mut schedule = Vec::new();
    while remaining > 0 {
        let gain = |w: usize| (0..n).filter(|&i| !covered[i][instance.allocation_of(i, w)]).count();
        let (best, best_gain) = argmax(num_o, |w| gain(w) as f64);
        if best_gain == 0.0 {
            // Some pair is unreachable from any outcome.
            break;
        }
        for (i, row) in covered.iter_mut().enumerate() {
            let s = instance.allocation_of(i, best);
            if !row[s] {
                row[s] = true;
                remaining -= 1;
            }
        }
        schedule.push(best);
    }
    if remaining > 0 {
        // Return an over-long sentinel so the caller reports infeasibility.
        return vec![0; instance.explore_rounds() + 1 + n * num_s];
    }
    schedule
}

fn exact_cover(instance: &MarketInstance, k: usize) -> Option<Vec<usize>> {
    let n = instance.n_agents();
    let num_s = instance.num_allocations();
    let mut counts = vec![vec![0u32; num_s]; n];
    let mut chosen = Vec::with_capacity(k);
    let mut budget = SCHEDULE_SEARCH_BUDGET;

    fn search(
        instance: &MarketInstance,
        k: usize,
        counts: &mut Vec<Vec<u32>>,
        chosen: &mut Vec<usize>,
        budget: &mut usize,
    ) -> bool {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        let first_gap = counts
            .iter()
            .enumerate()
            .find_map(|(i, row)| row.iter().position(|&c| c == 0).map(|s| (i, s)));
        let Some((agent, alloc)) = first_gap else {
            return true;
        };
        if chosen.len() == k {
            return false;
        }
        let uncovered: usize = counts.iter().map(|r| r.iter().filter(|&&c| c == 0).count()).sum();
        if uncovered > (k - chosen.len()) * instance.n_agents() {
            return false;
        }
        for w in 0..instance.num_outcomes() {
            if instance.allocation_of(agent, w) != alloc {
                continue;
            }
            for (i, row) in counts.iter_mut().enumerate() {
                row[instance.allocation_of(i, w)] += 1;
            }
            chosen.push(w);
            if search(instance, k, counts, chosen, budget) {
                return true;
            }
            chosen.pop();
            for (i, row) in counts.iter_mut().enumerate() {
                row[instance.allocation_of(i, w)] -= 1;
            }
        }
        false
    }

    let _ = n;
    search(instance, k, &mut counts, &mut chosen, &mut budget).then_some(chosen)
}

fn ensure_exploit(pos: &BracketPosition) -> Result<()> {
    if pos.phase != Phase::Exploit {
        return Err(usage(format!("round {} is an explore round", pos.round_t)));
    }
    Ok(())
}

fn confidence_tables(
    stats: &[AgentStats],
    est: &EstimatorConfig,
    instance: &MarketInstance,
    pos: &BracketPosition,
) -> Result<Vec<Vec<Confidence>>> {
    if stats.len() != instance.n_agents() {
        return Err(input(format!("{} estimators for {} agents", stats.len(), instance.n_agents())));
    }
    stats
        .iter()
        .map(|st| {
            st.confidence_table(est, pos.round_t, pos.bracket_q).map_err(|e| match e {
                Error::Precondition(m) => usage(m),
                other => other,
            })
        })
        .collect()
}

fn select_from_tables(instance: &MarketInstance, tables: &[Vec<Confidence>]) -> usize {
    argmax(instance.num_outcomes(), |w| instance.combine(w, None, |j, s| tables[j][s].ucb)).0
}

fn prices_from_tables(
    instance: &MarketInstance,
    tables: &[Vec<Confidence>],
    chosen: usize,
    price_method: PriceMethod,
) -> Vec<f64> {
    let (f, g): (fn(&Confidence) -> f64, fn(&Confidence) -> f64) = match price_method {
        PriceMethod::Age => (|c| c.lcb, |c| c.ucb),
        PriceMethod::Sel => (|c| c.ucb, |c| c.lcb),
    };
    (0..instance.n_agents())
        .map(|i| {
            let (_, best) = argmax(instance.num_outcomes(), |w| instance.combine(w, Some(i), |j, s| f(&tables[j][s])));
            best - instance.combine(chosen, Some(i), |j, s| g(&tables[j][s]))
        })
        .collect()
}

/// Exploit-round outcome: maximiser of the welfare upper confidence bound.
pub fn select_outcome(
    stats: &[AgentStats],
    est: &EstimatorConfig,
    instance: &MarketInstance,
    pos: &BracketPosition,
) -> Result<usize> {
    ensure_exploit(pos)?;
    let tables = confidence_tables(stats, est, instance, pos)?;
    Ok(select_from_tables(instance, &tables))
}

/// Exploit-round prices for outcome `chosen`.
pub fn compute_prices(
    stats: &[AgentStats],
    est: &EstimatorConfig,
    instance: &MarketInstance,
    chosen: usize,
    pos: &BracketPosition,
    price_method: PriceMethod,
) -> Result<Vec<f64>> {
    ensure_exploit(pos)?;
    instance.check_outcome(chosen)?;
    let tables = confidence_tables(stats, est, instance, pos)?;
    Ok(prices_from_tables(instance, &tables, chosen, price_method))
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_t: usize,
    pub bracket_q: usize,
    pub phase: Phase,
    pub outcome: usize,
    /// `φ_i(ω_t)` per agent.
    pub allocations: Vec<usize>,
    pub prices: Vec<f64>,
    /// Realised rewards `X_it`.
    pub realized: Vec<f64>,
    /// Reported rewards `Y_it`; `None` for agents participating by bids.
    pub reported: Vec<Option<f64>>,
}

/// Running state of one mechanism instance.
#[derive(Debug, Clone)]
pub struct Mechanism<'a> {
    instance: &'a MarketInstance,
    config: MechanismConfig,
    est: EstimatorConfig,
    schedule: Vec<usize>,
    stats: Vec<AgentStats>,
    clock: BracketClock,
    rounds_played: usize,
}

impl<'a> Mechanism<'a> {
    pub fn new(instance: &'a MarketInstance, config: MechanismConfig) -> Result<Self> {
        let est = EstimatorConfig::new(
            config.est_method,
            instance.noise_sigma(),
            instance.num_allocations(),
            instance.explore_rounds(),
        )?;
        Ok(Self {
            instance,
            config,
            est,
            schedule: build_explore_schedule(instance)?,
            stats: vec![AgentStats::new(instance.num_allocations()); instance.n_agents()],
            clock: BracketClock::new(instance.explore_rounds()),
            rounds_played: 0,
        })
    }

    /// Registers a bid for `agent`. Only allowed before the first round.
    pub fn submit_bid(&mut self, agent: usize, bid: Vec<f64>) -> Result<()> {
        self.instance.check_agent(agent)?;
        self.stats[agent].set_bid(bid, self.rounds_played)
    }

    pub fn config(&self) -> MechanismConfig {
        self.config
    }

    pub fn estimator_config(&self) -> &EstimatorConfig {
        &self.est
    }

    pub fn schedule(&self) -> &[usize] {
        &self.schedule
    }

    pub fn stats(&self) -> &[AgentStats] {
        &self.stats
    }

    pub fn rounds_played(&self) -> usize {
        self.rounds_played
    }

    /// Position of the next round to be played.
    pub fn next_position(&self) -> BracketPosition {
        self.clock.peek()
    }

    /// Plays one round against `population` and returns its record.
    pub fn step(&mut self, population: &mut Population) -> Result<RoundRecord> {
        let instance = self.instance;
        let n = instance.n_agents();
        if population.len() != n {
            return Err(input(format!("population has {} agents, market has {n}", population.len())));
        }
        let pos = self.clock.peek();
        let (outcome, prices) = match pos.phase {
            Phase::Explore => {
                if pos.offset == 0 {
                    self.stats.iter_mut().for_each(AgentStats::begin_explore_phase);
                }
                (self.schedule[pos.offset], vec![0.0; n])
            }
            Phase::Exploit => {
                let tables = confidence_tables(&self.stats, &self.est, instance, &pos)?;
                let chosen = select_from_tables(instance, &tables);
                let prices = prices_from_tables(instance, &tables, chosen, self.config.price_method);
                (chosen, prices)
            }
        };
        self.clock.advance();
        self.rounds_played += 1;

        let mut allocations = Vec::with_capacity(n);
        let mut realized = Vec::with_capacity(n);
        let mut reported = Vec::with_capacity(n);
        for i in 0..n {
            let s = instance.allocation_of(i, outcome);
            let x = population.realize(instance, i, s, pos.phase);
            let y = population.report(i, s, prices[i], x);
            match (self.stats[i].participation(), y) {
                (Participation::ByRewards, Some(y)) => {
                    self.stats[i].record_reward(&self.est, s, y, pos.phase)?;
                }
                (Participation::ByRewards, None) => {
                    return Err(input(format!("agent {i} participates by rewards but sent no report")));
                }
                (Participation::ByBids(_), Some(_)) => {
                    return Err(input(format!("agent {i} participates by bids but sent a report")));
                }
                (Participation::ByBids(_), None) => {}
            }
            allocations.push(s);
            realized.push(x);
            reported.push(y);
        }
        Ok(RoundRecord {
            round_t: pos.round_t,
            bracket_q: pos.bracket_q,
            phase: pos.phase,
            outcome,
            allocations,
            prices,
            realized,
            reported,
        })
    }
}
