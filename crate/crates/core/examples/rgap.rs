//! Layer-wise least-squares reconstruction of a natural image.
//!
//! `cargo run --release --example rgap -- cnn3_v3 2`

use gradleak::attack::rgap_reconstruct;
use gradleak::data::{natural_images, write_image};
use gradleak::harness::architecture;
use gradleak::net::{gradients_for, ObservedGradients, WeightSet};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "cnn2_v1".into());
    let index: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let spec = architecture(&name)?;
    let w = WeightSet::random(&spec, 1);
    let target = natural_images().get(index)?;
    let label = target.label as usize;
    let (_, g) = gradients_for(&spec, &w, &target.pixels, label)?;

    let mut rep = rgap_reconstruct(&spec, &w, &ObservedGradients::from(&g), label)?;
    let score = rep.score_against(&target.pixels)?;
    for l in &rep.layers {
        if let (Some(rank), Some(n)) = (l.numeric_rank, l.unknowns) {
            println!(
                "layer {} rank {rank}/{n} residual {:.2e}",
                l.layer,
                l.residual.unwrap_or(f64::NAN)
            );
        }
    }
    println!(
        "{name} image {index}: mse {:.3e} psnr {:.2} dB in {:.1}s",
        score.mse, score.psnr, rep.wall_time_secs
    );
    let out = std::env::temp_dir().join(format!("{name}_img{index}_rgap.ppm"));
    write_image(&rep.image, spec.input_shape, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
