//! Trains a small classifier on synthetic two-class images and prints the
//! loss curve.

use gradleak::data::synthetic_images;
use gradleak::harness::{pretrain, select_training_data, PretrainConfig};
use gradleak::net::{NetworkSpec, Shape3, WeightSet};

fn main() -> anyhow::Result<()> {
    let spec = NetworkSpec::builder(Shape3::new(3, 32, 32))
        .conv(4, 4, 2, 1)
        .fully_connected(10)
        .build()?;
    let cfg = PretrainConfig {
        epochs: 5,
        batch_size: 16,
        train_images: 160,
        test_images: 40,
        ..PretrainConfig::default()
    };
    // automobile and bird
    let pool = synthetic_images(400, &[1, 2], 11);
    let (train, test) = select_training_data(&pool, &cfg, &[])?;
    let out = pretrain(&spec, &WeightSet::random(&spec, 11), &train, &test, &cfg, 11)?;
    for e in &out.curve {
        println!(
            "epoch {:>2} train {:.4} test {:.4}",
            e.epoch,
            e.train_loss,
            e.test_loss.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
