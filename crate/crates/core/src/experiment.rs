//! JSON experiment configs and the file outputs of the command-line tool.
//!
//! Configs are strict: unknown fields are rejected. Every field has a default
//! that reproduces the ten-bidder benchmark (T = 3000, seeds 0..50, all four
//! mechanism cells), so `{}` is a valid config.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::AgentPolicy;
use crate::error::{input, Error, Result};
use crate::harness::{run_many, AggregateCurve, RunConfig};
use crate::instances::{lower_bound_pair, random_instance, single_item_benchmark, Structure};
use crate::market::MarketInstance;
use crate::mechanism::MechanismConfig;
use crate::metrics::{bound, BoundParams, Guarantee, ParticipationKind};

/// Which `Θ` of the lower-bound pair to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Theta1,
    Theta2,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    #[default]
    Benchmark,
    LowerBound { n: usize, num_outcomes: usize, horizon: usize, hypothesis: Hypothesis },
    Random { n: usize, num_allocations: usize, structure: Structure, seed: u64 },
    /// Path to a market JSON file, relative to the working directory.
    File { path: PathBuf },
    Inline { market: MarketInstance },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<MarketInstance> {
        match self {
            InstanceSpec::Benchmark => Ok(single_item_benchmark()),
            InstanceSpec::LowerBound { n, num_outcomes, horizon, hypothesis } => {
                let pair = lower_bound_pair(*n, *num_outcomes, *horizon)?;
                Ok(match hypothesis {
                    Hypothesis::Theta1 => pair.theta1,
                    Hypothesis::Theta2 => pair.theta2,
                })
            }
            InstanceSpec::Random { n, num_allocations, structure, seed } => {
                random_instance(*n, *num_allocations, *structure, *seed)
            }
            InstanceSpec::File { path } => {
                let text = fs::read_to_string(path)
                    .map_err(|e| input(format!("cannot read market file {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(Error::from)
            }
            InstanceSpec::Inline { market } => Ok(market.clone()),
        }
    }
}

/// Knobs for the verification suites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    pub bracket_k_grid: Vec<usize>,
    pub bracket_max_t: usize,
    pub false_bids: usize,
    pub bidder_seeds: Vec<u64>,
    pub misreport_factor: f64,
    pub lower_bound_n: usize,
    pub lower_bound_outcomes: usize,
    pub lower_bound_horizon: usize,
    pub lower_bound_seeds: Vec<u64>,
    pub scaling_horizons: Vec<usize>,
    pub scaling_seeds: Vec<u64>,
    pub slope_range: (f64, f64),
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            bracket_k_grid: vec![1, 2, 5, 10],
            bracket_max_t: 100_000,
            false_bids: 25,
            bidder_seeds: (0..20).collect(),
            misreport_factor: 0.5,
            lower_bound_n: 2,
            lower_bound_outcomes: 3,
            lower_bound_horizon: 512,
            lower_bound_seeds: (0..100).collect(),
            scaling_horizons: vec![1000, 3000, 9000, 27000],
            scaling_seeds: (0..30).collect(),
            slope_range: (0.5, 0.85),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub grid: Vec<MechanismConfig>,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// One policy per agent; everybody reports truthfully when absent.
    pub policies: Option<Vec<AgentPolicy>>,
    pub output_dir: Option<PathBuf>,
    pub verify: VerifyParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec::default(),
            grid: MechanismConfig::grid().to_vec(),
            horizon: 3000,
            seeds: (0..50).collect(),
            policies: None,
            output_dir: None,
            verify: VerifyParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(input("horizon must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(input("seed list is empty"));
        }
        if self.grid.is_empty() {
            return Err(input("mechanism grid is empty"));
        }
        Ok(())
    }

    pub fn policies_for(&self, instance: &MarketInstance) -> Result<Vec<AgentPolicy>> {
        match &self.policies {
            Some(p) if p.len() != instance.n_agents() => Err(input(format!(
                "config lists {} policies for {} agents",
                p.len(),
                instance.n_agents()
            ))),
            Some(p) => Ok(p.clone()),
            None => Ok(vec![AgentPolicy::TruthfulRewards; instance.n_agents()]),
        }
    }

    pub fn base_run(&self, instance: &MarketInstance, mechanism: MechanismConfig) -> Result<RunConfig> {
        Ok(RunConfig::new(self.horizon, self.seeds[0], mechanism, self.policies_for(instance)?))
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// CSV of an aggregate curve: `t`, the mean columns, then `<column>_se`.
///
/// Numbers use Rust's shortest round-trip formatting.
pub fn curve_csv(curve: &AggregateCurve) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(curve.columns.iter().cloned());
    header.extend(curve.columns.iter().map(|c| format!("{c}_se")));
    w.write_record(&header).map_err(csv_error)?;
    for (t, (mean, se)) in curve.mean.iter().zip(&curve.se).enumerate() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(mean.iter().map(|x| x.to_string()));
        row.extend(se.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn curve_file_name(mechanism: &MechanismConfig) -> String {
    format!("curve_{}.csv", mechanism.label())
}

#[derive(Debug, Clone, Serialize)]
struct RunMetadata<'a> {
    config: &'a ExperimentConfig,
    crate_version: &'static str,
    files: Vec<String>,
    wall_time_seconds: f64,
}

/// Output of [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub curves: Vec<AggregateCurve>,
    pub files: Vec<PathBuf>,
}

/// Aggregates every grid cell and writes one CSV per cell plus `metadata.json`.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let started = std::time::Instant::now();
    let instance = config.instance.build()?;
    fs::create_dir_all(out_dir)?;
    let mut curves = Vec::new();
    let mut files = Vec::new();
    for &cell in &config.grid {
        let base = config.base_run(&instance, cell)?;
        let curve = run_many(&instance, &base, &config.seeds)?;
        let path = out_dir.join(curve_file_name(&cell));
        write_atomic(&path, &curve_csv(&curve)?)?;
        files.push(path);
        curves.push(curve);
    }
    let meta = RunMetadata {
        config,
        crate_version: env!("CARGO_PKG_VERSION"),
        files: files.iter().map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned()).collect(),
        wall_time_seconds: Duration::as_secs_f64(&started.elapsed()),
    };
    let meta_path = out_dir.join("metadata.json");
    write_atomic(&meta_path, &serde_json::to_vec_pretty(&meta)?)?;
    files.push(meta_path);
    Ok(RunOutput { curves, files })
}

/// One row of the bounds table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRow {
    pub mechanism: MechanismConfig,
    /// Deficit `E[U^π − U]` for an agent participating by rewards.
    pub truthfulness: f64,
    /// Deficit `E[−U_iT]` for a truthful agent participating by rewards.
    pub individual_rationality: f64,
    pub vcg_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsTable {
    pub params: BoundParams,
    pub rows: Vec<BoundsRow>,
}

/// Evaluates the truthfulness, IR and VCG-regret bounds for every grid cell.
pub fn cmd_bounds(config: &ExperimentConfig) -> Result<BoundsTable> {
    let instance = config.instance.build()?;
    let mut rows = Vec::new();
    let mut params = None;
    for &cell in &config.grid {
        let p = BoundParams::for_instance(&instance, config.horizon, cell.est_method, cell.price_method)
            .with_participation(ParticipationKind::Rewards);
        rows.push(BoundsRow {
            mechanism: cell,
            truthfulness: bound(Guarantee::Truthfulness, &p)?,
            individual_rationality: bound(Guarantee::IndividualRationality, &p)?,
            vcg_regret: bound(Guarantee::VcgRegret, &p)?,
        });
        params.get_or_insert(p);
    }
    let params = params.expect("grid is validated non-empty");
    Ok(BoundsTable { params, rows })
}

impl BoundsTable {
    pub fn render(&self) -> String {
        let p = &self.params;
        let mut s = format!(
            "n = {}, T = {}, K = {}, |S| = {}, sigma = {}, Vmax = {}\n\
             bounds are on non-negative deficits: E[U^pi - U], E[-U_iT], E[R_max]\n",
            p.n, p.horizon, p.explore_rounds, p.num_allocations, p.sigma, p.v_max
        );
        s.push_str(&format!("{:<10} {:>16} {:>16} {:>16}\n", "cell", "truthfulness", "ir", "vcg_regret"));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<10} {:>16.4} {:>16.4} {:>16.4}\n",
                r.mechanism.label(),
                r.truthfulness,
                r.individual_rationality,
                r.vcg_regret
            ));
        }
        s
    }
}
