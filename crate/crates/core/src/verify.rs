//! Named verification suites behind `vcg-learn verify <suite>`.
//!
//! Every suite returns a list of [`Check`]s with the measured value and the
//! tolerance it was held to. The suites read their sizes from the config's
//! `verify` block and run the configured instance and mechanism grid.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::agents::AgentPolicy;
use crate::error::{usage, Error, Result};
use crate::estimator::{EstMethod, Phase};
use crate::experiment::ExperimentConfig;
use crate::harness::{run_final, run_many, run_with, scaling_experiment, AggregateCurve, RunConfig, TraceDetail};
use crate::instances::{lower_bound_pair, random_instance, Structure};
use crate::market::{vcg_solve, MarketInstance};
use crate::mechanism::{phase_of_round, MechanismConfig, PriceMethod};
use crate::metrics::{bound, lower_bound_value, BoundParams, Guarantee, ParticipationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    Identities,
    Truthfulness,
    Ir,
    Brackets,
    LowerBound,
    Scaling,
    /// VCG-regret envelope on the configured instance.
    Regret,
    /// Ordinal comparisons between the four mechanism cells.
    Ordering,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Identities,
        Suite::Truthfulness,
        Suite::Ir,
        Suite::Brackets,
        Suite::LowerBound,
        Suite::Scaling,
        Suite::Regret,
        Suite::Ordering,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::Truthfulness => "truthfulness",
            Suite::Ir => "ir",
            Suite::Brackets => "brackets",
            Suite::LowerBound => "lower-bound",
            Suite::Scaling => "scaling",
            Suite::Regret => "regret",
            Suite::Ordering => "ordering",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
            usage(format!("unknown suite {s:?}; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    /// Human-readable acceptance condition, e.g. `<= 1e-9`.
    pub tolerance: String,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { name: name.into(), passed: measured <= limit, measured, tolerance: format!("<= {}", fmt_num(limit)) }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { name: name.into(), passed: measured >= limit, measured, tolerance: format!(">= {}", fmt_num(limit)) }
    }

    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            passed: (lo..=hi).contains(&measured),
            measured,
            tolerance: format!("in [{}, {}]", fmt_num(lo), fmt_num(hi)),
        }
    }
}

/// Plain notation for ordinary magnitudes, scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 || (1e-3..1e7).contains(&x.abs()) || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {} (want {})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            fmt_num(self.measured),
            self.tolerance
        )
    }
}

pub fn run_suite(suite: Suite, config: &ExperimentConfig) -> Result<Vec<Check>> {
    match suite {
        Suite::Identities => identities(config),
        Suite::Truthfulness => truthfulness(config),
        Suite::Ir => ir(config),
        Suite::Brackets => brackets(config),
        Suite::LowerBound => lower_bound(config),
        Suite::Scaling => scaling(config),
        Suite::Regret => regret(config),
        Suite::Ordering => ordering(config),
    }
}

const IDENTITY_INSTANCES: u64 = 200;
const IDENTITY_TOL: f64 = 1e-12;
const DECOMPOSITION_TOL: f64 = 1e-9;
const AS_TOL: f64 = 1e-9;

/// Random instance number `k` of the identity sweep, with `|Ω| ≤ 2000`.
pub fn identity_instance(k: u64) -> Result<MarketInstance> {
    let n = 1 + (k % 5) as usize;
    let s = 2 + (k / 5 % 3) as usize;
    if s.checked_pow(n as u32).is_some_and(|size| size <= 2000) && k % 4 != 3 {
        random_instance(n, s, Structure::Product, k)
    } else {
        random_instance(n, 2, Structure::SingleSlot, k)
    }
}

fn all_bidders(n: usize) -> Vec<AgentPolicy> {
    vec![AgentPolicy::TruthfulBids; n]
}

fn identities(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let mut worst_util: f64 = 0.0;
    let mut worst_seller: f64 = 0.0;
    for k in 0..IDENTITY_INSTANCES {
        let m = identity_instance(k)?;
        let sol = vcg_solve(&m);
        let n = m.n_agents() as f64;
        for (i, &(_, v)) in sol.without_agent_optima.iter().enumerate() {
            worst_util = worst_util.max((sol.agent_utilities[i] - (sol.max_welfare - v)).abs());
        }
        let u0 = sol.sum_without_agent_optima() - (n - 1.0) * sol.max_welfare;
        worst_seller = worst_seller.max((sol.seller_utility - u0).abs());
    }
    let mut checks = vec![
        Check::at_most("u_i* = Val(w*) - Val_-i(w*_-i)", worst_util, IDENTITY_TOL),
        Check::at_most("u_0* = sum Val_-i(w*_-i) - (n-1) Val(w*)", worst_seller, IDENTITY_TOL),
    ];

    let instance = config.instance.build()?;
    let seeds = &config.verify.bidder_seeds;
    for &cell in &config.grid {
        let base = config.base_run(&instance, cell)?.with_detail(TraceDetail::Summary);
        let worst: Vec<(f64, f64)> = seeds
            .par_iter()
            .map(|&seed| {
                let mut sum_gap: f64 = 0.0;
                let mut dec_gap: f64 = 0.0;
                run_with(&instance, &base.with_seed(seed), |_, _, l| {
                    let (ra, rm, rt) = (l.agent_sum_regret(), l.seller_regret(), l.welfare_regret());
                    let (da, dm) = l.decomposition();
                    sum_gap = sum_gap.max((ra + rm - rt).abs());
                    dec_gap = dec_gap.max((da - ra).abs()).max((dm - rm).abs());
                })?;
                Ok((sum_gap, dec_gap))
            })
            .collect::<Result<_>>()?;
        let label = cell.label();
        let sum_gap = worst.iter().map(|w| w.0).fold(0.0, f64::max);
        let dec_gap = worst.iter().map(|w| w.1).fold(0.0, f64::max);
        checks.push(Check::at_most(format!("{label} R_a + R_mech = R_T, every round"), sum_gap, DECOMPOSITION_TOL));
        checks.push(Check::at_most(format!("{label} (R_a, R_mech) from (R_T, W_T), every round"), dec_gap, DECOMPOSITION_TOL));

        let bidders = RunConfig::new(config.horizon, 0, cell, all_bidders(instance.n_agents()));
        let mut worst_exploit: f64 = 0.0;
        run_with(&instance, &bidders, |record, instant, _| {
            if record.phase == Phase::Exploit {
                let m = instant.agents.iter().fold(instant.welfare.abs().max(instant.seller.abs()), |a, b| a.max(b.abs()));
                worst_exploit = worst_exploit.max(m);
            }
        })?;
        checks.push(Check::at_most(format!("{label} truthful bidders, exploit-round regret"), worst_exploit, 0.0));
    }
    Ok(checks)
}

/// Seeded false bid tables, uniform on `[0, 1]` per allocation.
pub fn sample_false_bids(count: usize, num_allocations: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..num_allocations).map(|_| rng.random::<f64>()).collect()).collect()
}

const FALSE_BID_SEED: u64 = 0x0b1d;

fn truthfulness(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let instance = config.instance.build()?;
    let n = instance.n_agents();
    let mut checks = Vec::new();

    // Bidders under ETC: no false bid ever helps, seed by seed.
    let bids = sample_false_bids(config.verify.false_bids, instance.num_allocations(), FALSE_BID_SEED);
    for price in PriceMethod::ALL {
        let cell = MechanismConfig::new(EstMethod::Etc, price);
        let base = RunConfig::new(config.horizon, 0, cell, all_bidders(n));
        let truthful = run_final(&instance, &base, &config.verify.bidder_seeds)?;
        let mut worst = f64::NEG_INFINITY;
        for (k, bid) in bids.iter().enumerate() {
            let agent = k % n;
            let mut deviant = base.clone();
            deviant.policies[agent] = AgentPolicy::FalseBids { bid: bid.clone() };
            let lied = run_final(&instance, &deviant, &config.verify.bidder_seeds)?;
            for (u, v) in truthful.iter().zip(&lied) {
                worst = worst.max(v.utilities[agent] - u.utilities[agent]);
            }
        }
        checks.push(Check::at_most(format!("{} false bids, max U^pi - U", cell.label()), worst, AS_TOL));
    }

    // Misreporting rewards by a constant factor: mean gain within the bound.
    let misreport = AgentPolicy::StationaryMisreport {
        misreport: crate::agents::Misreport::Scale { factor: config.verify.misreport_factor },
    };
    for &cell in config.grid.iter().filter(|c| c.est_method == EstMethod::Etc) {
        let base = config.base_run(&instance, cell)?;
        let result = crate::harness::deviation_experiment(&instance, 0, &misreport, &base, &config.seeds)?;
        let p = BoundParams::for_instance(&instance, config.horizon, cell.est_method, cell.price_method)
            .with_participation(ParticipationKind::Rewards);
        checks.push(Check::at_most(
            format!("{} agent 1 misreport, mean U^pi - U", cell.label()),
            result.mean,
            bound(Guarantee::Truthfulness, &p)?,
        ));
    }
    Ok(checks)
}

/// Lowest cumulative utility of the bidders in `policies` over every round and seed.
fn min_bidder_utility(instance: &MarketInstance, base: &RunConfig, seeds: &[u64]) -> Result<f64> {
    let bidders: Vec<usize> = (0..instance.n_agents())
        .filter(|&i| matches!(base.policies[i], AgentPolicy::TruthfulBids))
        .collect();
    let per_seed: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| {
            let mut low = f64::INFINITY;
            run_with(instance, &base.with_seed(seed), |_, _, l| {
                for &i in &bidders {
                    low = low.min(l.utility(i));
                }
            })?;
            Ok(low)
        })
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().fold(f64::INFINITY, f64::min))
}

fn ir(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let instance = config.instance.build()?;
    let n = instance.n_agents();
    let mut checks = Vec::new();
    for est in EstMethod::ALL {
        let cell = MechanismConfig::new(est, PriceMethod::Age);
        let base = RunConfig::new(config.horizon, 0, cell, all_bidders(n));
        let low = min_bidder_utility(&instance, &base, &config.verify.bidder_seeds)?;
        checks.push(Check::at_least(format!("{} truthful bidders, min U_it", cell.label()), low, -AS_TOL));
        let mixed: Vec<AgentPolicy> = (0..n)
            .map(|i| if i % 2 == 0 { AgentPolicy::TruthfulBids } else { AgentPolicy::TruthfulRewards })
            .collect();
        let base = RunConfig::new(config.horizon, 0, cell, mixed);
        let low = min_bidder_utility(&instance, &base, &config.verify.bidder_seeds)?;
        checks.push(Check::at_least(format!("{} bidders among reward reporters, min U_it", cell.label()), low, -AS_TOL));
    }
    for &cell in &config.grid {
        let base = config.base_run(&instance, cell)?;
        let finals = run_final(&instance, &base, &config.seeds)?;
        let m = finals.len() as f64;
        let low = (0..n)
            .map(|i| finals.iter().map(|s| s.utilities[i]).sum::<f64>() / m)
            .fold(f64::INFINITY, f64::min);
        let p = BoundParams::for_instance(&instance, config.horizon, cell.est_method, cell.price_method)
            .with_participation(ParticipationKind::Rewards);
        checks.push(Check::at_least(
            format!("{} min over agents of mean U_iT", cell.label()),
            low,
            -bound(Guarantee::IndividualRationality, &p)?,
        ));
    }
    Ok(checks)
}

fn brackets(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for &k in &config.verify.bracket_k_grid {
        let kf = (k as f64).powf(-2.0 / 3.0);
        let mut lower_margin = f64::INFINITY;
        let mut upper_margin = f64::INFINITY;
        for t in (2 * k + 1)..=config.verify.bracket_max_t {
            let pos = phase_of_round(t, k)?;
            let scale = kf * (t as f64).powf(2.0 / 3.0);
            let q = pos.bracket_q as f64;
            upper_margin = upper_margin.min(3.0 * scale - q);
            if pos.phase == Phase::Exploit {
                lower_margin = lower_margin.min(q - 0.5 * scale);
            }
        }
        checks.push(Check::at_least(format!("K = {k}: min q_T - K^(-2/3) T^(2/3) / 2 over exploit rounds"), lower_margin, 0.0));
        checks.push(Check::at_least(format!("K = {k}: min 3 K^(-2/3) T^(2/3) - q_T over all rounds"), upper_margin, 0.0));
    }
    Ok(checks)
}

fn lower_bound(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let v = &config.verify;
    let pair = lower_bound_pair(v.lower_bound_n, v.lower_bound_outcomes, v.lower_bound_horizon)?;
    let target = lower_bound_value(v.lower_bound_n, v.lower_bound_horizon)?;
    let mut checks = Vec::new();
    for &cell in &config.grid {
        let mut best = f64::NEG_INFINITY;
        for theta in [&pair.theta1, &pair.theta2] {
            let base = RunConfig::new(v.lower_bound_horizon, 0, cell, vec![AgentPolicy::TruthfulRewards; v.lower_bound_n]);
            let finals = run_final(theta, &base, &v.lower_bound_seeds)?;
            best = best.max(finals.iter().map(|s| s.vcg).sum::<f64>() / finals.len() as f64);
        }
        checks.push(Check::at_least(format!("{} max over hypotheses of mean R_max", cell.label()), best, target));
    }
    Ok(checks)
}

fn scaling(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let instance = config.instance.build()?;
    let (lo, hi) = config.verify.slope_range;
    let mut checks = Vec::new();
    for &cell in config.grid.iter().filter(|c| c.est_method == EstMethod::Etc) {
        let base = config.base_run(&instance, cell)?;
        let fit = scaling_experiment(&instance, &config.verify.scaling_horizons, &base, &config.verify.scaling_seeds)?;
        checks.push(Check::within(format!("{} log-log slope of mean R_max", cell.label()), fit.slope, lo, hi));
    }
    Ok(checks)
}

fn regret(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let instance = config.instance.build()?;
    let mut checks = Vec::new();
    for &cell in &config.grid {
        let base = config.base_run(&instance, cell)?;
        let finals = run_final(&instance, &base, &config.seeds)?;
        let mean = finals.iter().map(|s| s.vcg).sum::<f64>() / finals.len() as f64;
        let p = BoundParams::for_instance(&instance, config.horizon, cell.est_method, cell.price_method);
        checks.push(Check::at_most(format!("{} mean R_max", cell.label()), mean, bound(Guarantee::VcgRegret, &p)?));
    }
    Ok(checks)
}

/// Largest increase of `series` over its running minimum.
pub fn largest_rise(series: &[f64]) -> f64 {
    let mut low = f64::INFINITY;
    let mut rise: f64 = 0.0;
    for &x in series {
        low = low.min(x);
        rise = rise.max(x - low);
    }
    rise
}

/// Ordinal comparisons of the aggregate curves of the four cells.
pub fn ordering_checks(curves: &[AggregateCurve], n: usize) -> Result<Vec<Check>> {
    let find = |est, price| {
        curves
            .iter()
            .find(|c| c.mechanism == MechanismConfig::new(est, price))
            .ok_or_else(|| usage("ordering checks need all four mechanism cells"))
    };
    let last = |c: &AggregateCurve, col: &str| c.final_mean(col).ok_or_else(|| usage(format!("missing column {col}")));
    let mut checks = Vec::new();
    for price in PriceMethod::ALL {
        let gap = last(find(EstMethod::Opt, price)?, "R_T")? - last(find(EstMethod::Etc, price)?, "R_T")?;
        checks.push(Check::at_most(format!("{price}: R_T(OPT) - R_T(ETC)"), gap, 0.0).strict());
    }
    for est in EstMethod::ALL {
        let gap = last(find(est, PriceMethod::Sel)?, "R_mech")? - last(find(est, PriceMethod::Age)?, "R_mech")?;
        checks.push(Check::at_most(format!("{est}: R_mech(SEL) - R_mech(AGE)"), gap, 0.0).strict());
    }
    for est in EstMethod::ALL {
        let gap = last(find(est, PriceMethod::Age)?, "R_agent_1")? - last(find(est, PriceMethod::Sel)?, "R_agent_1")?;
        checks.push(Check::at_most(format!("{est}: R_1(AGE) - R_1(SEL)"), gap, 0.0).strict());
    }
    for curve in curves {
        for agent in [3, n].into_iter().filter(|&a| a <= n) {
            let col = format!("R_agent_{agent}");
            let series = curve.mean_of(&col).ok_or_else(|| usage(format!("missing column {col}")))?;
            let label = curve.mechanism.label();
            checks.push(Check::at_most(format!("{label} agent {agent}: largest rise of mean regret"), largest_rise(&series), 0.0));
            checks.push(Check::at_most(format!("{label} agent {agent}: final mean regret"), last(curve, &col)?, 0.0).strict());
        }
    }
    Ok(checks)
}

impl Check {
    /// Turns a `<=`/`>=` check into a strict one.
    fn strict(mut self) -> Self {
        if let Some(rest) = self.tolerance.strip_prefix("<= ") {
            let limit: f64 = rest.parse().expect("formatted by at_most");
            // fmt_num round-trips, so `limit` is the original bound.
            self.passed = self.measured < limit;
            self.tolerance = format!("< {rest}");
        }
        self
    }
}

fn ordering(config: &ExperimentConfig) -> Result<Vec<Check>> {
    let instance = config.instance.build()?;
    let curves = MechanismConfig::grid()
        .into_iter()
        .map(|cell| run_many(&instance, &config.base_run(&instance, cell)?, &config.seeds))
        .collect::<Result<Vec<_>>>()?;
    ordering_checks(&curves, instance.n_agents())
}
