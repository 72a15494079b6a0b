//! The two optimisation-only baselines: L2 matching and cosine matching with
//! a TV prior, both from the same random start.

use gradleak::attack::{cosinetv_reconstruct, dlg_reconstruct, MatchingConfig};
use gradleak::data::natural_images;
use gradleak::net::{gradients_for, NetworkSpec, ObservedGradients, Shape3, WeightSet};

fn main() -> anyhow::Result<()> {
    let spec = NetworkSpec::builder(Shape3::new(3, 32, 32))
        .conv(4, 4, 2, 1)
        .conv(3, 4, 2, 1)
        .fully_connected(10)
        .build()?;
    let w = WeightSet::random(&spec, 3);
    let target = natural_images().get(1)?;
    let label = target.label as usize;
    let (_, g) = gradients_for(&spec, &w, &target.pixels, label)?;
    let obs = ObservedGradients::from(&g);

    let mut dlg = dlg_reconstruct(&spec, &w, &obs, label, &MatchingConfig::dlg(9))?;
    let mut cos = cosinetv_reconstruct(&spec, &w, &obs, label, &MatchingConfig::cosinetv(9))?;
    for (name, rep) in [("dlg", &mut dlg), ("cosinetv", &mut cos)] {
        let s = rep.score_against(&target.pixels)?;
        println!(
            "{name:<9} objective {:.3e} mse {:.4} psnr {:.2} dB",
            rep.objective.unwrap_or(f64::NAN),
            s.mse,
            s.psnr
        );
    }
    Ok(())
}
