use gradleak::data::{
    load_cifar10_batch, natural_images, read_csv_report, read_float_image, write_cifar10_batch, write_float_image, Cifar10Batch,
    Cifar10Record, CIFAR_SHAPE, PIXELS, RECORD_BYTES,
};
use gradleak::harness::{run_experiment, ExperimentConfig};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = Vec<u8>> {
    (0u8..10, prop::collection::vec(any::<u8>(), PIXELS)).prop_map(|(l, mut px)| {
        px.insert(0, l);
        px
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bytes_survive_decode_and_encode(bytes in record()) {
        let r = Cifar10Record::decode(&bytes);
        prop_assert_eq!(r.encode(), bytes);
    }

    #[test]
    fn batch_files_round_trip(records in prop::collection::vec(record(), 1..4), pick in 0usize..4) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let decoded: Vec<Cifar10Record> = records.iter().map(|b| Cifar10Record::decode(b)).collect();
        write_cifar10_batch(&path, &decoded).unwrap();
        prop_assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, records.len() * RECORD_BYTES);
        let batch = Cifar10Batch::open(&path).unwrap();
        prop_assert_eq!(batch.iter().collect::<Vec<_>>(), decoded.clone());
        let i = pick % records.len();
        prop_assert_eq!(&load_cifar10_batch(&path, i).unwrap(), &decoded[i]);
    }

    #[test]
    fn float_sidecar_is_bit_exact(values in prop::collection::vec(any::<f64>(), 12)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f64");
        write_float_image(&values, gradleak::net::Shape3::new(3, 2, 2), &p).unwrap();
        let (_, back) = read_float_image(&p).unwrap();
        prop_assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}

#[test]
fn builtin_images_are_in_range() {
    for r in natural_images().iter() {
        assert_eq!(r.pixels.len(), CIFAR_SHAPE.len());
        assert!(r.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}

#[test]
fn one_rgap_run_on_the_smallest_net_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml("architecture = \"cnn2_v1\"\nmethods = [\"rgap\"]\nimages = [2]").unwrap();
    let out = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert_eq!(out.failures(), 0);
    let rows = read_csv_report(dir.path().join("report.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert_eq!(
        (row.architecture.as_str(), row.method.name(), row.rd.as_str()),
        ("cnn2_v1", "rgap", "0")
    );
    assert_eq!(row.c_metric_rounded, Some(0));
    assert!(row.mse.unwrap() < 1e-20);
    assert!(dir.path().join("images/cnn2_v1_img2_rgap.ppm").exists());
}
