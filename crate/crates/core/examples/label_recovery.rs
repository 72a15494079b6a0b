//! Reads the true label off the sign pattern of the last-layer gradient.

use gradleak::harness::catalog;
use gradleak::net::{gradients_for, label_from_fc_gradients, WeightSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, spec) in catalog() {
        let mut hits = 0;
        for _ in 0..20 {
            let w = WeightSet::random(&spec, rng.gen());
            let x: Vec<f64> = (0..spec.input_len()).map(|_| rng.gen()).collect();
            let label = rng.gen_range(0..spec.num_classes);
            let (_, g) = gradients_for(&spec, &w, &x, label)?;
            hits += (label_from_fc_gradients(&g.layers.last().unwrap().weight, spec.num_classes)? == label) as usize;
        }
        println!("{name:<8} {hits}/20");
    }
    Ok(())
}
