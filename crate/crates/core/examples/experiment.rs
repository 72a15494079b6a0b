//! Runs an experiment described in TOML and writes the report, images and
//! audits to a directory.
//!
//! `cargo run --release --example experiment -- path/to/experiment.toml out/`

use std::path::PathBuf;

use gradleak::data::read_csv_report;
use gradleak::harness::{run_experiment, ExperimentConfig};

const DEFAULT: &str = r#"
architecture = { name = "tiny", conv = [[4, 3, 2, 1], [3, 3, 2, 1]] }
images = [0, 1]
methods = ["rgap", "hybrid", "dlg"]
seed = 42

[hybrid]
budget_scale = 0.05

[dlg]
iterations = 100
"#;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::from_toml(DEFAULT)?,
    };
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("gradleak-experiment"));
    let outcome = run_experiment(&cfg, Some(&out))?;
    println!("{} runs, {} failures", outcome.runs.len(), outcome.failures());
    for row in read_csv_report(out.join("report.csv"))? {
        println!(
            "{:<6} img {} {:<8} {:<6} mse {:.4e} c(M) {:.1} rd ({})",
            row.architecture,
            row.image_index,
            row.method.name(),
            row.status,
            row.mse.unwrap_or(f64::NAN),
            row.c_metric.unwrap_or(f64::NAN),
            row.rd
        );
    }
    println!("output in {}", out.display());
    Ok(())
}
