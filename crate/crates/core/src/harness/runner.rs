use std::fs;
use std::path::{Path, PathBuf};

use super::config::{DatasetConfig, DatasetSource, ExperimentConfig, PretrainConfig, DATASET_ENV};
use super::pretrain::{pretrain, select_training_data, PretrainOutcome};
use crate::attack::{cosinetv_reconstruct, dlg_reconstruct, hybrid_reconstruct, rgap_reconstruct, Method, ReconstructionReport};
use crate::data::{write_float_image, write_image, write_report, ArchitectureAudit, Cifar10Batch, Cifar10Record, RunOutcome};
use crate::error::{Error, Result};
use crate::metrics::security_metric;
use crate::net::{gradients_for, NetworkSpec, ObservedGradients, WeightSet};

/// SplitMix64 of `master` and `index`: the seed of the `index`-th derived stream.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const WEIGHT_STREAM: u64 = 0;
const PRETRAIN_STREAM: u64 = 1 << 32;
const RUN_STREAM: u64 = 2 << 32;

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunOutcome>,
    pub audits: Vec<ArchitectureAudit>,
    /// Architecture-level failures (weights, audit, pre-training).
    pub errors: Vec<(String, String)>,
    pub pretraining: Vec<(String, PretrainOutcome)>,
}

impl ExperimentOutcome {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.result.is_err()).count() + self.errors.len()
    }

    pub fn find(&self, architecture: &str, image_index: usize, method: Method) -> Option<&RunOutcome> {
        self.runs
            .iter()
            .find(|r| r.architecture == architecture && r.image_index == image_index && r.method == method)
    }
}

pub fn save_weights(weights: &WeightSet, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_vec(weights)?)?;
    Ok(())
}

pub fn load_weights(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<WeightSet> {
    let w: WeightSet = serde_json::from_slice(&fs::read(path)?)?;
    w.validate(spec)?;
    Ok(w)
}

/// Writes `epoch,train_loss,test_loss` rows.
pub fn write_loss_curve(outcome: &PretrainOutcome, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "test_loss"])?;
    for e in &outcome.curve {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.test_loss.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Initial weights of the `arch_index`-th architecture of a run.
pub fn initial_weights(cfg: &ExperimentConfig, spec: &NetworkSpec, arch_index: usize) -> Result<WeightSet> {
    match &cfg.weights.path {
        Some(p) => load_weights(spec, p),
        None => {
            let seed = cfg
                .weights
                .seed
                .unwrap_or_else(|| derive_seed(cfg.seed, WEIGHT_STREAM + arch_index as u64));
            Ok(WeightSet::random_scaled(spec, seed, cfg.weights.scale))
        }
    }
}

/// Every record available for pre-training.
pub fn training_pool(p: &PretrainConfig, seed: u64) -> Result<Vec<Cifar10Record>> {
    let ds = p.dataset.clone().unwrap_or_else(|| DatasetConfig {
        classes: p.classes.clone(),
        ..DatasetConfig::synthetic(p.train_images + p.test_images, seed)
    });
    if ds.source != DatasetSource::Cifar {
        return Ok(ds.load()?.iter().collect());
    }
    let root = std::env::var_os(DATASET_ENV).map(PathBuf::from);
    let file = ds.cifar_path(root.as_deref())?;
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut pool = Vec::new();
    for k in 1..=5 {
        let p = dir.join(format!("data_batch_{k}.bin"));
        if p.exists() {
            pool.extend(Cifar10Batch::open(p)?.iter());
        }
    }
    if pool.is_empty() {
        pool.extend(Cifar10Batch::open(file)?.iter());
    }
    Ok(pool)
}

/// Pre-trains one architecture as configured, never training on `targets`.
pub fn pretrain_architecture(
    cfg: &ExperimentConfig,
    spec: &NetworkSpec,
    arch_index: usize,
    targets: &[&[f64]],
) -> Result<PretrainOutcome> {
    let p = cfg
        .pretrain
        .as_ref()
        .ok_or_else(|| Error::Config("no [pretrain] section".into()))?;
    let seed = derive_seed(cfg.seed, PRETRAIN_STREAM + arch_index as u64);
    let pool = training_pool(p, seed)?;
    let (train, test) = select_training_data(&pool, p, targets)?;
    pretrain(spec, &initial_weights(cfg, spec, arch_index)?, &train, &test, p, seed)
}

fn attack(
    cfg: &ExperimentConfig,
    spec: &NetworkSpec,
    weights: &WeightSet,
    record: &Cifar10Record,
    method: Method,
    seed: u64,
) -> Result<ReconstructionReport> {
    let label = record.label as usize;
    let (_, grads) = gradients_for(spec, weights, &record.pixels, label)?;
    let observed = ObservedGradients::from(&grads);
    let mut report = match method {
        Method::Rgap => rgap_reconstruct(spec, weights, &observed, label)?,
        Method::Hybrid => {
            let hp = cfg.hybrid.hyperparams(spec.conv_layer_count())?;
            hybrid_reconstruct(spec, weights, &observed, label, &hp)?
        }
        Method::Dlg => dlg_reconstruct(spec, weights, &observed, label, &cfg.dlg.matching(seed))?,
        Method::CosineTv => cosinetv_reconstruct(spec, weights, &observed, label, &cfg.cosinetv.matching(seed))?,
    };
    report.score_against(&record.pixels)?;
    Ok(report)
}

fn write_images(dir: &Path, stem: &str, spec: &NetworkSpec, image: &[f64]) -> Result<()> {
    write_image(image, spec.input_shape, dir.join(format!("{stem}.ppm")))?;
    write_float_image(image, spec.input_shape, dir.join(format!("{stem}.f64")))
}

/// Runs every (architecture, image, method) of `cfg` and, given `out_dir`,
/// writes the report, audits, reconstructions and any pre-training output.
///
/// Failures of single runs are recorded and the batch goes on.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let archs = cfg.architecture.resolve()?;
    let dataset = cfg.dataset.load()?;
    let targets: Vec<(usize, std::result::Result<Cifar10Record, String>)> = cfg
        .images
        .iter()
        .map(|&i| (i, dataset.get(i).map_err(|e| e.to_string())))
        .collect();
    let image_dir = match out_dir {
        Some(d) if cfg.output.images => {
            let p = d.join("images");
            fs::create_dir_all(&p)?;
            Some(p)
        }
        Some(d) => {
            fs::create_dir_all(d)?;
            None
        }
        None => None,
    };

    let mut out = ExperimentOutcome::default();
    let mut run_index = 0u64;
    for (a, (name, spec)) in archs.iter().enumerate() {
        let fail = |out: &mut ExperimentOutcome, e: Error| out.errors.push((name.clone(), e.to_string()));
        let weights = if cfg.pretrain.is_some() {
            let exclude: Vec<&[f64]> = targets
                .iter()
                .filter_map(|(_, r)| r.as_ref().ok())
                .map(|r| r.pixels.as_slice())
                .collect();
            pretrain_architecture(cfg, spec, a, &exclude).and_then(|p| {
                if let Some(d) = out_dir {
                    save_weights(&p.weights, d.join(format!("{name}_weights.json")))?;
                    write_loss_curve(&p, d.join(format!("{name}_loss.csv")))?;
                }
                let w = p.weights.clone();
                out.pretraining.push((name.clone(), p));
                Ok(w)
            })
        } else {
            initial_weights(cfg, spec, a)
        };

        let weights = match weights {
            Ok(w) => Some(w),
            Err(e) => {
                fail(&mut out, e);
                None
            }
        };

        if let (Some(w), true) = (&weights, cfg.output.audit) {
            if let Some(probe) = targets.iter().find_map(|(_, r)| r.as_ref().ok()) {
                match security_metric(spec, w, &probe.pixels, probe.label as usize, cfg.hybrid.rank_tolerance()) {
                    Ok(audit) => out.audits.push(ArchitectureAudit {
                        architecture: name.clone(),
                        audit,
                    }),
                    Err(e) => fail(&mut out, e),
                }
            }
        }

        for (index, record) in &targets {
            if let (Some(dir), Ok(r)) = (&image_dir, record) {
                write_images(dir, &format!("img{index}_truth"), spec, &r.pixels)?;
            }
            for &method in &cfg.methods {
                let seed = derive_seed(cfg.seed, RUN_STREAM + run_index);
                run_index += 1;
                let result = match (&weights, record) {
                    (None, _) => Err("weights unavailable".to_string()),
                    (_, Err(e)) => Err(e.clone()),
                    (Some(w), Ok(r)) => attack(cfg, spec, w, r, method, seed).map_err(|e| e.to_string()),
                };
                if let (Some(dir), Ok(rep)) = (&image_dir, &result) {
                    write_images(dir, &format!("{name}_img{index}_{}", method.name()), spec, &rep.image)?;
                }
                out.runs.push(RunOutcome {
                    architecture: name.clone(),
                    image_index: *index,
                    label: record.as_ref().map(|r| r.label as usize).unwrap_or(0),
                    method,
                    seed,
                    result,
                });
            }
        }
    }

    if let Some(d) = out_dir {
        let format = cfg.output.format;
        write_report(
            &out.runs,
            &out.audits,
            d.join(format!("report.{}", format.extension())),
            format,
        )?;
        if !out.audits.is_empty() {
            fs::write(d.join("audits.json"), serde_json::to_vec_pretty(&out.audits)?)?;
        }
        if !out.errors.is_empty() {
            fs::write(d.join("errors.json"), serde_json::to_vec_pretty(&out.errors)?)?;
        }
    }
    Ok(out)
}
