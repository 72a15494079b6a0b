//! Round-trips images through the CIFAR-10 binary format, PPM previews and
//! the lossless float sidecar.

use gradleak::data::{
    natural_images, read_float_image, write_cifar10_batch, write_float_image, write_image, Cifar10Batch, CIFAR_SHAPE, CLASS_NAMES,
};
use gradleak::metrics::mse;

fn main() -> anyhow::Result<()> {
    let dir = tempfile_dir()?;
    let images: Vec<_> = natural_images().iter().collect();
    for (i, r) in images.iter().enumerate() {
        println!("image {i}: {}", CLASS_NAMES[r.label as usize]);
    }

    let batch_path = dir.join("batch.bin");
    write_cifar10_batch(&batch_path, &images)?;
    let back = Cifar10Batch::open(&batch_path)?;
    println!(
        "batch of {} records, first record mse after 8-bit round trip {:.2e}",
        back.len(),
        mse(&back.get(0)?.pixels, &images[0].pixels)?
    );

    let f = dir.join("img0.f64");
    write_float_image(&images[0].pixels, CIFAR_SHAPE, &f)?;
    let (shape, pixels) = read_float_image(&f)?;
    println!("float sidecar {shape}: bit-exact {}", pixels == images[0].pixels);

    write_image(&images[0].pixels, CIFAR_SHAPE, dir.join("img0.ppm"))?;
    println!("files in {}", dir.display());
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join("gradleak-images");
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
