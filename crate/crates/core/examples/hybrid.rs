//! The hybrid attack against plain least squares on a rank-deficient net.
//!
//! Budgets are scaled down so this runs in seconds; pass a factor to change
//! that (`1` is the full budget).

use gradleak::attack::{hybrid_reconstruct, rgap_reconstruct, HybridHyperparams};
use gradleak::data::natural_images;
use gradleak::net::{gradients_for, NetworkSpec, ObservedGradients, Shape3, WeightSet};

fn main() -> anyhow::Result<()> {
    let factor: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.2);
    // 3 output channels at stride 2 cannot pin down a 3x32x32 input.
    let spec = NetworkSpec::builder(Shape3::new(3, 32, 32))
        .conv(4, 3, 2, 1)
        .fully_connected(10)
        .build()?;
    let w = WeightSet::random(&spec, 1);
    let target = natural_images().get(0)?;
    let label = target.label as usize;
    let (_, g) = gradients_for(&spec, &w, &target.pixels, label)?;
    let obs = ObservedGradients::from(&g);

    let mut ls = rgap_reconstruct(&spec, &w, &obs, label)?;
    let hp = HybridHyperparams::defaults(spec.conv_layer_count()).scaled(factor);
    let mut hy = hybrid_reconstruct(&spec, &w, &obs, label, &hp)?;
    for (name, rep) in [("least squares", &mut ls), ("hybrid", &mut hy)] {
        let s = rep.score_against(&target.pixels)?;
        println!(
            "{name:<14} mse {:.4e} psnr {:6.2} dB, {} updates",
            s.mse, s.psnr, rep.iterations
        );
    }
    Ok(())
}
