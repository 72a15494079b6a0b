//! Lists the reference architectures and audits one of them on random weights.
//!
//! `cargo run --example catalog_audit -- cnn3_v3`

use gradleak::data::natural_images;
use gradleak::harness::{architecture, CATALOG};
use gradleak::linsys::RankTolerance;
use gradleak::metrics::security_metric;
use gradleak::net::WeightSet;

fn main() -> anyhow::Result<()> {
    for e in &CATALOG {
        println!(
            "{:<8} conv {:?} rd {:?} c(M) {}",
            e.name, e.conv, e.reference_rd, e.reference_c
        );
    }

    let name = std::env::args().nth(1).unwrap_or_else(|| "cnn2_v2".into());
    let spec = architecture(&name)?;
    let weights = WeightSet::random(&spec, 1);
    let probe = natural_images().get(0)?;
    let audit = security_metric(&spec, &weights, &probe.pixels, probe.label as usize, RankTolerance::default())?;
    println!("\n{name}:");
    for l in &audit.layers {
        println!(
            "  layer {} rank {} of {} unknowns, {} rows, rd {} (weight {:.3}, cond {:.2e})",
            l.layer, l.rank, l.unknowns, l.rows, l.deficiency, l.weight, l.condition
        );
    }
    println!("  c(M) = {:.2} (rounded {})", audit.c_metric.exact, audit.c_metric.rounded);
    Ok(())
}
