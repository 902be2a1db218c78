//! Simulation drivers: single runs, seed aggregation, paired deviation
//! experiments and log-log scaling fits.
//!
//! Seeds run in parallel on the current rayon pool. Results are always reduced
//! in seed order, so output does not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentPolicy, Population};
use crate::error::{input, precondition, Result};
use crate::market::{vcg_solve, MarketInstance};
use crate::mechanism::{Mechanism, MechanismConfig, RoundRecord};
use crate::metrics::{InstantRegret, LedgerSnapshot, RegretLedger};

/// How much of a run [`run`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceDetail {
    /// Final ledger only.
    Summary,
    /// A ledger snapshot after every round.
    #[default]
    Ledger,
    /// Snapshots plus round records and instantaneous regrets.
    Full,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub horizon: usize,
    pub seed: u64,
    pub mechanism: MechanismConfig,
    pub policies: Vec<AgentPolicy>,
    pub detail: TraceDetail,
}

impl RunConfig {
    pub fn new(horizon: usize, seed: u64, mechanism: MechanismConfig, policies: Vec<AgentPolicy>) -> Self {
        Self { horizon, seed, mechanism, policies, detail: TraceDetail::default() }
    }

    pub fn with_detail(mut self, detail: TraceDetail) -> Self {
        self.detail = detail;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Output of [`run`]. Vectors are empty when the detail level skips them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<RoundRecord>,
    pub instants: Vec<InstantRegret>,
    pub snapshots: Vec<LedgerSnapshot>,
    pub last: Option<LedgerSnapshot>,
}

/// Plays `config.horizon` rounds, calling `observe` after each one.
pub fn run_with<F>(instance: &MarketInstance, config: &RunConfig, mut observe: F) -> Result<RegretLedger>
where
    F: FnMut(&RoundRecord, &InstantRegret, &RegretLedger),
{
    if config.horizon == 0 {
        return Err(input("horizon must be at least 1"));
    }
    if config.policies.len() != instance.n_agents() {
        return Err(input(format!(
            "{} policies for {} agents",
            config.policies.len(),
            instance.n_agents()
        )));
    }
    let mut mechanism = Mechanism::new(instance, config.mechanism)?;
    for (i, policy) in config.policies.iter().enumerate() {
        if let crate::estimator::Participation::ByBids(bid) = policy.participation(instance, i) {
            mechanism.submit_bid(i, bid)?;
        }
    }
    let mut population = Population::new(instance, config.policies.clone(), config.seed)?;
    let mut ledger = RegretLedger::new(vcg_solve(instance));
    for _ in 0..config.horizon {
        let record = mechanism.step(&mut population)?;
        let instant = ledger.update(&record, instance);
        observe(&record, &instant, &ledger);
    }
    Ok(ledger)
}

pub fn run(instance: &MarketInstance, config: &RunConfig) -> Result<Trace> {
    let mut trace = Trace::default();
    let detail = config.detail;
    let ledger = run_with(instance, config, |record, instant, ledger| {
        if detail != TraceDetail::Summary {
            trace.snapshots.push(ledger.snapshot());
        }
        if detail == TraceDetail::Full {
            trace.records.push(record.clone());
            trace.instants.push(instant.clone());
        }
    })?;
    trace.last = Some(ledger.snapshot());
    Ok(trace)
}

/// Per-round mean and standard error of the regret series across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub mechanism: MechanismConfig,
    pub seeds: usize,
    /// `R_T, R_a, R_mech, R_max, R_agent_1, …, R_agent_n`.
    pub columns: Vec<String>,
    /// `mean[t − 1][c]`.
    pub mean: Vec<Vec<f64>>,
    /// Sample standard deviation over `√m`; zero for a single seed.
    pub se: Vec<Vec<f64>>,
}

impl AggregateCurve {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Mean series of column `name`.
    pub fn mean_of(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column_index(name)?;
        Some(self.mean.iter().map(|row| row[c]).collect())
    }

    pub fn final_mean(&self, name: &str) -> Option<f64> {
        let c = self.column_index(name)?;
        self.mean.last().map(|row| row[c])
    }
}

pub fn curve_columns(n: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["R_T", "R_a", "R_mech", "R_max"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=n).map(|i| format!("R_agent_{i}")));
    cols
}

fn curve_row(s: &LedgerSnapshot) -> Vec<f64> {
    let mut row = vec![s.welfare, s.agent_sum, s.seller, s.vcg];
    row.extend_from_slice(&s.agents);
    row
}

/// Runs one config per seed and aggregates round by round.
pub fn run_many(instance: &MarketInstance, base: &RunConfig, seeds: &[u64]) -> Result<AggregateCurve> {
    if seeds.is_empty() {
        return Err(input("run_many needs at least one seed"));
    }
    let runs: Vec<Vec<Vec<f64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut rows = Vec::with_capacity(base.horizon);
            let config = base.with_seed(seed);
            run_with(instance, &config, |_, _, ledger| rows.push(curve_row(&ledger.snapshot())))?;
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let m = seeds.len() as f64;
    let width = 4 + instance.n_agents();
    let mut mean = vec![vec![0.0; width]; base.horizon];
    let mut se = vec![vec![0.0; width]; base.horizon];
    for t in 0..base.horizon {
        for c in 0..width {
            // Shifted by the first run so identical runs average to themselves exactly.
            let first = runs[0][t][c];
            let avg = first + runs.iter().map(|r| r[t][c] - first).sum::<f64>() / m;
            mean[t][c] = avg;
            if seeds.len() > 1 {
                let ss: f64 = runs.iter().map(|r| (r[t][c] - avg).powi(2)).sum();
                se[t][c] = (ss / (m - 1.0)).sqrt() / m.sqrt();
            }
        }
    }
    Ok(AggregateCurve {
        mechanism: base.mechanism,
        seeds: seeds.len(),
        columns: curve_columns(instance.n_agents()),
        mean,
        se,
    })
}

/// Final snapshot of each seed, in seed order.
pub fn run_final(instance: &MarketInstance, base: &RunConfig, seeds: &[u64]) -> Result<Vec<LedgerSnapshot>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let config = base.with_seed(seed).with_detail(TraceDetail::Summary);
            run_with(instance, &config, |_, _, _| {}).map(|l| l.snapshot())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationResult {
    pub agent: usize,
    /// `U^π_iT − U_iT` per seed, in seed order.
    pub differences: Vec<f64>,
    pub mean: f64,
}

impl DeviationResult {
    pub fn max(&self) -> f64 {
        self.differences.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs `base` and `base` with agent `agent` switched to `deviation` on the
/// same seeds and compares the agent's cumulative pseudo-utility.
pub fn deviation_experiment(
    instance: &MarketInstance,
    agent: usize,
    deviation: &AgentPolicy,
    base: &RunConfig,
    seeds: &[u64],
) -> Result<DeviationResult> {
    instance.check_agent(agent)?;
    if seeds.is_empty() {
        return Err(input("deviation experiment needs at least one seed"));
    }
    let mut deviant = base.clone();
    deviant.policies.get_mut(agent).map(|p| *p = deviation.clone()).ok_or_else(|| input("policy list too short"))?;
    let truthful = run_final(instance, base, seeds)?;
    let deviating = run_final(instance, &deviant, seeds)?;
    let differences: Vec<f64> =
        truthful.iter().zip(&deviating).map(|(u, v)| v.utilities[agent] - u.utilities[agent]).collect();
    let mean = differences.iter().sum::<f64>() / differences.len() as f64;
    Ok(DeviationResult { agent, differences, mean })
}

/// Least-squares fit of `ln R = slope · ln T + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(T, mean R_max,T)` used in the fit.
    pub points: Vec<(usize, f64)>,
    /// Points left out because the mean was not positive.
    pub excluded: Vec<(usize, f64)>,
    pub warnings: Vec<String>,
}

/// Ordinary least squares on `(ln x, ln y)`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(input("a log-log fit needs at least two points"));
    }
    if points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return Err(input("log-log fit needs positive coordinates"));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(input("log-log fit needs at least two distinct x values"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Mean `R_max,T` over seeds at each horizon, then a log-log fit.
///
/// The mechanism does not know the horizon, so one run per seed up to the
/// largest `T` gives every grid point.
pub fn scaling_experiment(
    instance: &MarketInstance,
    horizons: &[usize],
    base: &RunConfig,
    seeds: &[u64],
) -> Result<ScalingFit> {
    if horizons.len() < 3 {
        return Err(precondition("scaling needs at least three horizons"));
    }
    let k = instance.explore_rounds();
    if let Some(&t) = horizons.iter().find(|&&t| t <= 2 * k) {
        return Err(precondition(format!("horizon {t} is not above 2K = {}", 2 * k)));
    }
    if seeds.is_empty() {
        return Err(input("scaling needs at least one seed"));
    }
    let mut grid = horizons.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let t_max = *grid.last().expect("non-empty");
    let per_seed: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut config = base.with_seed(seed).with_detail(TraceDetail::Summary);
            config.horizon = t_max;
            let mut at = Vec::with_capacity(grid.len());
            run_with(instance, &config, |record, _, ledger| {
                if grid.binary_search(&record.round_t).is_ok() {
                    at.push(ledger.vcg_regret());
                }
            })?;
            Ok(at)
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (g, &t) in grid.iter().enumerate() {
        let mean = per_seed.iter().map(|r| r[g]).sum::<f64>() / seeds.len() as f64;
        if mean > 0.0 {
            points.push((t, mean));
        } else {
            warnings.push(format!("T = {t}: mean R_max = {mean} is not positive, point excluded"));
            excluded.push((t, mean));
        }
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(t, r)| (t as f64, r)).collect();
    let (slope, intercept) = fit_loglog(&xy)?;
    Ok(ScalingFit { slope, intercept, points, excluded, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{EstMethod, Phase};
    use crate::instances::single_item_benchmark;
    use crate::mechanism::PriceMethod;

    fn bench_config(horizon: usize, est: EstMethod, price: PriceMethod) -> RunConfig {
        RunConfig::new(horizon, 1, MechanismConfig::new(est, price), vec![AgentPolicy::TruthfulRewards; 10])
    }

    #[test]
    fn trace_length_matches_horizon() {
        let m = single_item_benchmark();
        for t in [1, 10, 21] {
            let trace = run(&m, &bench_config(t, EstMethod::Opt, PriceMethod::Age).with_detail(TraceDetail::Full)).unwrap();
            assert_eq!(trace.records.len(), t);
            assert_eq!(trace.snapshots.len(), t);
            assert_eq!(trace.last.unwrap().t, t);
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let m = single_item_benchmark();
        let cfg = bench_config(300, EstMethod::Opt, PriceMethod::Sel).with_detail(TraceDetail::Full);
        let a = run(&m, &cfg).unwrap();
        let b = run(&m, &cfg).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.snapshots, b.snapshots);
    }

    #[test]
    fn truthful_bidders_play_vcg_on_exploit_rounds() {
        let m = single_item_benchmark();
        let sol = vcg_solve(&m);
        for price in PriceMethod::ALL {
            let mut cfg = bench_config(500, EstMethod::Etc, price).with_detail(TraceDetail::Full);
            cfg.policies = vec![AgentPolicy::TruthfulBids; 10];
            let trace = run(&m, &cfg).unwrap();
            for r in trace.records.iter().filter(|r| r.phase == Phase::Exploit) {
                assert_eq!(r.outcome, sol.optimal_outcome);
                assert_eq!(r.prices, sol.prices);
            }
        }
    }

    #[test]
    fn mismatched_policies_are_input_errors() {
        let m = single_item_benchmark();
        let mut cfg = bench_config(10, EstMethod::Etc, PriceMethod::Age);
        cfg.policies.pop();
        assert!(matches!(run(&m, &cfg), Err(crate::Error::Input(_))));
        cfg.policies.push(AgentPolicy::TruthfulRewards);
        cfg.horizon = 0;
        assert!(run(&m, &cfg).is_err());
    }

    #[test]
    fn single_and_duplicated_seed_aggregates() {
        let m = single_item_benchmark();
        let cfg = bench_config(120, EstMethod::Opt, PriceMethod::Age);
        let one = run_many(&m, &cfg, &[5]).unwrap();
        let trace = run(&m, &cfg.with_seed(5)).unwrap();
        for (row, snap) in one.mean.iter().zip(&trace.snapshots) {
            assert_eq!(row[0], snap.welfare);
            assert_eq!(row[3], snap.vcg);
        }
        assert!(one.se.iter().flatten().all(|&x| x == 0.0));
        let dup = run_many(&m, &cfg, &[5, 5, 5]).unwrap();
        assert!(dup.se.iter().flatten().all(|&x| x == 0.0));
        for (a, b) in dup.mean.iter().zip(&one.mean) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn aggregate_is_mean_of_runs() {
        let m = single_item_benchmark();
        let cfg = bench_config(80, EstMethod::Etc, PriceMethod::Sel);
        let seeds = [1, 2, 3, 4];
        let agg = run_many(&m, &cfg, &seeds).unwrap();
        let finals: Vec<_> = seeds.iter().map(|&s| run(&m, &cfg.with_seed(s)).unwrap().last.unwrap()).collect();
        let mean = finals.iter().map(|s| s.welfare).sum::<f64>() / 4.0;
        assert!((agg.final_mean("R_T").unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn identity_deviation_is_free() {
        let m = single_item_benchmark();
        let cfg = bench_config(200, EstMethod::Opt, PriceMethod::Age);
        let r = deviation_experiment(&m, 0, &AgentPolicy::TruthfulRewards, &cfg, &[1, 2, 3]).unwrap();
        assert!(r.differences.iter().all(|&d| d == 0.0));
        assert!(deviation_experiment(&m, 10, &AgentPolicy::TruthfulRewards, &cfg, &[1]).is_err());
    }

    #[test]
    fn explore_rewards_pair_under_etc() {
        let m = single_item_benchmark();
        let cfg = bench_config(400, EstMethod::Etc, PriceMethod::Age).with_detail(TraceDetail::Full);
        let mut dev = cfg.clone();
        dev.policies[0] = AgentPolicy::StationaryMisreport {
            misreport: crate::agents::Misreport::Scale { factor: 0.5 },
        };
        let a = run(&m, &cfg).unwrap();
        let b = run(&m, &dev).unwrap();
        for (x, y) in a.records.iter().zip(&b.records) {
            if x.phase == Phase::Explore {
                assert_eq!(x.realized, y.realized);
            }
        }
    }

    #[test]
    fn loglog_fit_examples() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 5000.0].iter().map(|&t: &f64| (t, 3.0 * t.powf(2.0 / 3.0))).collect();
        let (slope, intercept) = fit_loglog(&pts).unwrap();
        assert!((slope - 2.0 / 3.0).abs() < 1e-12);
        assert!((intercept - 3f64.ln()).abs() < 1e-10);
        let flat: Vec<(f64, f64)> = [10.0, 100.0, 1000.0].iter().map(|&t| (t, 7.0)).collect();
        assert!(fit_loglog(&flat).unwrap().0.abs() < 1e-12);
        assert!(fit_loglog(&[(1.0, 1.0)]).is_err());
    }

    #[test]
    fn scaling_preconditions() {
        let m = single_item_benchmark();
        let cfg = bench_config(10, EstMethod::Etc, PriceMethod::Age);
        assert!(scaling_experiment(&m, &[100, 200], &cfg, &[1]).is_err());
        assert!(scaling_experiment(&m, &[20, 200, 400], &cfg, &[1]).is_err());
        let fit = scaling_experiment(&m, &[100, 200, 400], &cfg, &[1, 2]).unwrap();
        assert_eq!(fit.points.len() + fit.excluded.len(), 3);
    }
}
