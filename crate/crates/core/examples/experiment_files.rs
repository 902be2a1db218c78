//! Builds an experiment config from JSON, writes the per-cell CSV curves and
//! runs a verification suite, the same path the `vcg-learn` binary takes.
//!
//! Run with `cargo run --release --example experiment_files -- [out_dir]`.

use std::path::PathBuf;

use vcg_learn::experiment::{cmd_run, ExperimentConfig};
use vcg_learn::verify::{run_suite, Suite};

fn main() -> vcg_learn::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("vcg-learn-example"));
    let config = ExperimentConfig::from_json(
        r#"{
            "instance": {"kind": "random", "n": 3, "num_allocations": 2, "structure": "single_slot", "seed": 11},
            "horizon": 1500,
            "seeds": [0, 1, 2, 3, 4, 5, 6, 7]
        }"#,
    )?;
    let output = cmd_run(&config, &out)?;
    for f in &output.files {
        println!("wrote {}", f.display());
    }
    for check in run_suite(Suite::Identities, &config)? {
        println!("{check}");
    }
    Ok(())
}
