//! Builds the per-layer linear system of a conv layer, reports its rank and
//! solves it by minimum-norm least squares.

use gradleak::harness::architecture;
use gradleak::linsys::{build_layer_system, RankTolerance};
use gradleak::net::{gradients_for, WeightSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "cnn2_v1".into());
    let spec = architecture(&name)?;
    let w = WeightSet::random(&spec, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..spec.input_len()).map(|_| rng.gen()).collect();
    let (trace, g) = gradients_for(&spec, &w, &x, 4)?;

    for i in (0..spec.depth()).filter(|&i| spec.layers[i].is_conv()) {
        let mut sys = build_layer_system(
            &spec,
            i,
            &w.layers[i],
            &trace.post_activations[i],
            &g.layers[i].weight,
            &g.layers[i].pre_activation,
        )?;
        let ls = sys.solve(RankTolerance::default())?;
        let d = &ls.diagnostics;
        let err =
            ls.x.iter()
                .zip(&trace.inputs[i])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        println!(
            "layer {i}: {} rows x {} unknowns, rank {}, cond {:.2e}, residual {:.2e}, max error vs true input {:.2e}",
            sys.rows(),
            sys.input_len(),
            d.numeric_rank,
            d.condition_estimate,
            sys.residual_norm(&ls.x),
            err
        );
    }
    Ok(())
}
