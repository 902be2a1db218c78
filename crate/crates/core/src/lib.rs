//! Multi-round VCG mechanism for agents who learn their values from bandit
//! feedback.
//!
//! The crate is organised bottom-up: [`market`] holds the static market and the
//! full-information VCG oracle, [`estimator`] the confidence intervals,
//! [`mechanism`] the bracketed explore/exploit loop, [`agents`] the reward
//! model and reporting strategies, [`metrics`] regret accounting and bounds,
//! [`instances`] the standard markets and [`harness`] the simulation drivers.
//! [`experiment`] and [`verify`] back the `vcg-learn` command-line tool.

pub mod agents;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod harness;
pub mod instances;
pub mod market;
pub mod mechanism;
pub mod metrics;
pub mod verify;

pub use agents::{AgentPolicy, Misreport, Population};
pub use error::{Error, Result};
pub use harness::{run, run_many, RunConfig};
pub use estimator::{EstMethod, Phase};
pub use market::{vcg_solve, MarketInstance, VcgSolution};
pub use mechanism::{Mechanism, MechanismConfig, PriceMethod, RoundRecord};
pub use metrics::RegretLedger;
