//! Recovers the input of a fully-connected classifier from one gradient.

use gradleak::attack::{fc_invert, fc_invert_with_bias};
use gradleak::net::{gradients_for, LayerSpec, NetworkSpec, Shape3, WeightSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let n = 48;
    let spec = NetworkSpec::new(Shape3::flat(n), vec![LayerSpec::fully_connected(n, 10)], 10)?;
    let weights = WeightSet::random(&spec, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
    let (_, g) = gradients_for(&spec, &weights, &x, 3)?;
    let fc = &g.layers[0];
    let bias_grad = fc.bias.as_ref().expect("fc layers carry a bias");

    let from_z = fc_invert(&fc.weight, bias_grad)?;
    let from_b = fc_invert_with_bias(&fc.weight, weights.layers[0].bias.as_ref().unwrap(), bias_grad)?;
    let err = |r: &[f64]| r.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max abs error via ∇z: {:.3e}", err(&from_z));
    println!("max abs error via ∇b: {:.3e}", err(&from_b));
    Ok(())
}
