use std::fs;

use gradleak::attack::Method;
use gradleak::data::read_csv_report;
use gradleak::harness::{architecture, catalog, run_experiment, ExperimentConfig};
use gradleak::linsys::RankTolerance;
use gradleak::metrics::security_metric;
use gradleak::net::WeightSet;

const SMALL: &str = r#"
images = [0, 3]
methods = ["rgap", "hybrid", "dlg", "cosinetv"]
seed = 5

[architecture]
name = "tiny"
conv = [[4, 2, 2, 0], [3, 2, 2, 0]]

[hybrid]
budget_scale = 0.02

[cosinetv]
iterations = 40
tv_weight = 0.0001
"#;

fn without_wall_time(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map(|(a, _)| a).unwrap_or(l))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn same_config_gives_the_same_report() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_experiment(&cfg, Some(a.path())).unwrap();
    run_experiment(&cfg, Some(b.path())).unwrap();
    assert_eq!(first.failures(), 0);
    assert_eq!(first.runs.len(), 8);
    let read = |d: &tempfile::TempDir| fs::read_to_string(d.path().join("report.csv")).unwrap();
    assert_eq!(without_wall_time(&read(&a)), without_wall_time(&read(&b)));
    let seeds: std::collections::BTreeSet<u64> = first.runs.iter().map(|r| r.seed).collect();
    assert_eq!(seeds.len(), 8);

    let mut other = cfg.clone();
    other.seed = 6;
    let c = tempfile::tempdir().unwrap();
    run_experiment(&other, Some(c.path())).unwrap();
    assert_ne!(without_wall_time(&read(&a)), without_wall_time(&read(&c)));
}

#[test]
fn empty_method_list_is_an_audit() {
    let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.methods.clear();
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&cfg, Some(dir.path())).unwrap();
    assert!(out.runs.is_empty());
    assert_eq!(out.audits.len(), 1);
    assert!(dir.path().join("audits.json").exists());
    let images: Vec<_> = fs::read_dir(dir.path().join("images"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert!(images.iter().all(|n| n.to_string_lossy().contains("truth")));
    assert!(read_csv_report(dir.path().join("report.csv")).unwrap().is_empty());
}

#[test]
fn bad_image_index_fails_only_its_runs() {
    let mut cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    cfg.images = vec![0, 99];
    cfg.methods = vec![Method::Rgap];
    let out = run_experiment(&cfg, None).unwrap();
    assert_eq!(out.failures(), 1);
    assert!(out.find("tiny", 0, Method::Rgap).unwrap().result.is_ok());
    assert!(out
        .find("tiny", 99, Method::Rgap)
        .unwrap()
        .result
        .as_ref()
        .unwrap_err()
        .contains("out of range"));
}

#[test]
fn audit_is_the_same_for_different_probes() {
    for name in ["cnn2_v2", "cnn3_v2"] {
        let spec = architecture(name).unwrap();
        let w = WeightSet::random(&spec, 4);
        let images = gradleak::data::natural_images();
        let scores: Vec<_> = (0..3)
            .map(|i| {
                let r = images.get(i).unwrap();
                security_metric(&spec, &w, &r.pixels, r.label as usize, RankTolerance::default())
                    .unwrap()
                    .deficiencies()
            })
            .collect();
        assert!(scores.windows(2).all(|p| p[0] == p[1]), "{name}: {scores:?}");
    }
}

#[test]
fn short_pretraining_lowers_the_loss() {
    let text = r#"
        architecture = "cnn2_v2"
        seed = 3
        [pretrain]
        epochs = 5
        train_images = 200
        test_images = 50
    "#;
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let spec = architecture("cnn2_v2").unwrap();
    let out = gradleak::harness::pretrain_architecture(&cfg, &spec, 0, &[]).unwrap();
    assert_eq!(out.curve.len(), 5);
    assert!(out.curve[0].train_loss > out.curve[1].train_loss && out.curve[1].train_loss > out.curve[2].train_loss);
    assert!(out.curve[2].test_loss.unwrap() < 2.3);
    assert_eq!(out.train_size, 200);
}

#[test]
fn catalog_chains_are_valid() {
    let all = catalog();
    assert_eq!(all.len(), 8);
    for (name, spec) in all {
        assert_eq!(spec.num_classes, 10, "{name}");
        assert!(spec.layers[..spec.depth() - 1].iter().all(|l| l.is_conv() && !l.has_bias));
        assert!(spec.layers.last().unwrap().has_bias);
    }
    assert_eq!(architecture("cnn3_v3").unwrap().layers[2].in_channels, 7056);
}

#[test]
fn bundled_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!cfg.architecture.resolve().unwrap().is_empty());
        n += 1;
    }
    assert!(n >= 4);
}
