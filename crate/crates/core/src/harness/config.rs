//! TOML experiment configuration. `configs/` in the crate holds
//! complete files; every table except `architecture` is optional.
//!
//! ```toml
//! architecture = "cnn3_v2"          # a catalog name, a list of names, or "all"
//! images = [0, 1]
//! methods = ["rgap", "hybrid"]      # empty: audit only
//! seed = 7
//!
//! [dataset]
//! source = "natural"                # "cifar", "natural" or "synthetic"
//!
//! [hybrid]
//! budget_scale = 1.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::catalog::{catalog_entry, CATALOG};
use crate::attack::{AdamConfig, HybridHyperparams, LayerBudget, MatchingConfig, Method, TvNorm, COSINETV_TV_WEIGHT};
use crate::data::{class_index, natural_images, synthetic_images, Cifar10Batch, Cifar10Record, ReportFormat, CIFAR_SHAPE};
use crate::error::{Error, Result};
use crate::linsys::RankTolerance;
use crate::net::{LayerSpec, NetworkSpec, Shape3};

/// Environment variable naming the directory of the CIFAR-10 binary batches.
pub const DATASET_ENV: &str = "CIFAR10_DIR";
/// Batch read from [`DATASET_ENV`] when a CIFAR dataset has no explicit path.
pub const DEFAULT_BATCH: &str = "test_batch.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architecture: ArchitectureSelection,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default = "default_images")]
    pub images: Vec<usize>,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub hybrid: HybridConfig,
    #[serde(default = "BaselineConfig::dlg")]
    pub dlg: BaselineConfig,
    #[serde(default = "BaselineConfig::cosinetv")]
    pub cosinetv: BaselineConfig,
    #[serde(default)]
    pub pretrain: Option<PretrainConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_images() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArchitectureSelection {
    Named(String),
    List(Vec<String>),
    Inline(InlineArchitecture),
}

/// A network written out layer by layer. Conv layers use tanh and no bias;
/// the FC layer is linear with bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineArchitecture {
    #[serde(default = "custom_name")]
    pub name: String,
    /// `(C, H, W)`.
    #[serde(default = "cifar_input")]
    pub input: [usize; 3],
    /// `[kernel, channels, stride, padding]` per conv layer.
    pub conv: Vec<[usize; 4]>,
    #[serde(default = "ten")]
    pub classes: usize,
    #[serde(default = "yes")]
    pub fc_bias: bool,
}

fn custom_name() -> String {
    "custom".into()
}

fn cifar_input() -> [usize; 3] {
    [CIFAR_SHAPE.channels, CIFAR_SHAPE.height, CIFAR_SHAPE.width]
}

fn ten() -> usize {
    10
}

fn yes() -> bool {
    true
}

impl InlineArchitecture {
    pub fn spec(&self) -> Result<NetworkSpec> {
        let [c, h, w] = self.input;
        let mut b = NetworkSpec::builder(Shape3::new(c, h, w));
        for &[k, ch, s, p] in &self.conv {
            b = b.conv(k, ch, s, p);
        }
        let spec = b.fully_connected(self.classes).build()?;
        if self.fc_bias {
            return Ok(spec);
        }
        let mut layers = spec.layers.clone();
        let last = layers.pop().expect("fc layer");
        layers.push(LayerSpec { has_bias: false, ..last });
        NetworkSpec::new(spec.input_shape, layers, spec.num_classes)
    }
}

impl ArchitectureSelection {
    /// Named specs in run order.
    pub fn resolve(&self) -> Result<Vec<(String, NetworkSpec)>> {
        let named = |n: &str| -> Result<Vec<(String, NetworkSpec)>> {
            if n.eq_ignore_ascii_case("all") {
                return Ok(CATALOG.iter().map(|e| (e.name.to_string(), e.spec())).collect());
            }
            let e = catalog_entry(n)?;
            Ok(vec![(e.name.to_string(), e.spec())])
        };
        match self {
            Self::Named(n) => named(n),
            Self::List(ns) => {
                if ns.is_empty() {
                    return Err(Error::Config("architecture list is empty".into()));
                }
                let mut out = Vec::new();
                for n in ns {
                    out.extend(named(n)?);
                }
                Ok(out)
            }
            Self::Inline(a) => Ok(vec![(a.name.clone(), a.spec()?)]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    Cifar,
    #[default]
    Natural,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub source: DatasetSource,
    /// CIFAR batch file; relative paths resolve against `$CIFAR10_DIR`.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Synthetic images only.
    #[serde(default = "synthetic_count")]
    pub count: usize,
    #[serde(default = "pretrain_classes")]
    pub classes: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

fn synthetic_count() -> usize {
    16
}

fn pretrain_classes() -> Vec<String> {
    vec!["automobile".into(), "bird".into()]
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Natural,
            path: None,
            count: synthetic_count(),
            classes: pretrain_classes(),
            seed: 0,
        }
    }
}

/// Class names to indices; unknown names and an empty list are errors.
pub fn class_indices(names: &[String]) -> Result<Vec<u8>> {
    if names.is_empty() {
        return Err(Error::Config("class subset is empty".into()));
    }
    names
        .iter()
        .map(|n| {
            class_index(n)
                .map(|i| i as u8)
                .ok_or_else(|| Error::Config(format!("unknown class `{n}`")))
        })
        .collect()
}

impl DatasetConfig {
    pub fn synthetic(count: usize, seed: u64) -> Self {
        Self {
            source: DatasetSource::Synthetic,
            count,
            seed,
            ..Self::default()
        }
    }

    /// Where a CIFAR batch is read from, given the dataset root.
    pub fn cifar_path(&self, root: Option<&Path>) -> Result<PathBuf> {
        match (&self.path, root) {
            (Some(p), _) if p.is_absolute() => Ok(p.clone()),
            (Some(p), Some(r)) => Ok(r.join(p)),
            (Some(p), None) => Ok(p.clone()),
            (None, Some(r)) => Ok(r.join(DEFAULT_BATCH)),
            (None, None) => Err(Error::Config(format!("cifar dataset needs `path` or ${DATASET_ENV}"))),
        }
    }

    pub fn load(&self) -> Result<Cifar10Batch> {
        match self.source {
            DatasetSource::Natural => Ok(natural_images()),
            DatasetSource::Cifar => {
                let root = std::env::var_os(DATASET_ENV).map(PathBuf::from);
                Cifar10Batch::open(self.cifar_path(root.as_deref())?)
            }
            DatasetSource::Synthetic => {
                if self.count == 0 {
                    return Err(Error::Config("synthetic dataset needs count > 0".into()));
                }
                let records = synthetic_images(self.count, &class_indices(&self.classes)?, self.seed);
                let bytes: Vec<u8> = records.iter().flat_map(Cifar10Record::encode).collect();
                Cifar10Batch::from_bytes(bytes, "<synthetic>")
            }
        }
    }
}

/// Where the attacked weights come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    /// Initialisation seed; derived from the master seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "one")]
    pub scale: f64,
    /// A JSON weight file written by `pretrain`; overrides initialisation.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn one() -> f64 {
    1.0
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            seed: None,
            scale: 1.0,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    /// Per-conv-layer budgets, input side first; empty uses the defaults.
    #[serde(default)]
    pub layers: Vec<LayerBudget>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default)]
    pub tv_norm: TvNorm,
    /// Multiplies every iteration count.
    #[serde(default = "one")]
    pub budget_scale: f64,
    #[serde(default = "default_safety")]
    pub rank_safety_factor: f64,
}

fn default_step() -> f64 {
    AdamConfig::default().step
}

fn default_safety() -> f64 {
    RankTolerance::default().safety_factor
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            layers: Vec::new(),
            step: default_step(),
            tv_norm: TvNorm::default(),
            budget_scale: 1.0,
            rank_safety_factor: default_safety(),
        }
    }
}

impl HybridConfig {
    pub fn rank_tolerance(&self) -> RankTolerance {
        RankTolerance {
            safety_factor: self.rank_safety_factor,
        }
    }

    pub fn hyperparams(&self, conv_layers: usize) -> Result<HybridHyperparams> {
        if !(self.budget_scale.is_finite() && self.budget_scale >= 0.0) {
            return Err(Error::Config("budget_scale must be non-negative".into()));
        }
        let mut hp = HybridHyperparams::defaults(conv_layers);
        if !self.layers.is_empty() {
            if self.layers.len() != conv_layers {
                return Err(Error::Config(format!(
                    "hybrid.layers has {} entries, network has {conv_layers} conv layers",
                    self.layers.len()
                )));
            }
            hp.layers = self.layers.clone();
        }
        hp.step = self.step;
        hp.tv_norm = self.tv_norm;
        hp.rank_tolerance = self.rank_tolerance();
        Ok(hp.scaled(self.budget_scale))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub iterations: usize,
    #[serde(default = "default_step")]
    pub step: f64,
    /// TV weight of the cosine baseline; DLG ignores it.
    #[serde(default = "cosinetv_tv_weight")]
    pub tv_weight: f64,
    #[serde(default)]
    pub tv_norm: TvNorm,
}

fn cosinetv_tv_weight() -> f64 {
    COSINETV_TV_WEIGHT
}

impl BaselineConfig {
    pub fn dlg() -> Self {
        Self {
            iterations: 300,
            step: default_step(),
            tv_weight: 0.0,
            tv_norm: TvNorm::default(),
        }
    }

    pub fn cosinetv() -> Self {
        Self {
            iterations: 4800,
            tv_weight: COSINETV_TV_WEIGHT,
            ..Self::dlg()
        }
    }

    pub fn matching(&self, seed: u64) -> MatchingConfig {
        MatchingConfig {
            iterations: self.iterations,
            step: self.step,
            tv_weight: self.tv_weight,
            tv_norm: self.tv_norm,
            seed,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_step")]
    pub learning_rate: f64,
    #[serde(default = "pretrain_classes")]
    pub classes: Vec<String>,
    #[serde(default = "default_train")]
    pub train_images: usize,
    #[serde(default = "default_test")]
    pub test_images: usize,
    /// Training data; synthetic when absent. CIFAR training reads
    /// `data_batch_1..5.bin` next to the configured file.
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
}

fn default_epochs() -> usize {
    30
}

fn default_batch() -> usize {
    64
}

fn default_train() -> usize {
    10_000
}

fn default_test() -> usize {
    1_000
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_step(),
            classes: pretrain_classes(),
            train_images: default_train(),
            test_images: default_test(),
            dataset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_format")]
    pub format: ReportFormat,
    /// Write reconstructions as PPM plus float sidecars.
    #[serde(default = "yes")]
    pub images: bool,
    /// Compute a security audit per architecture.
    #[serde(default = "yes")]
    pub audit: bool,
}

fn default_format() -> ReportFormat {
    ReportFormat::Csv
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: default_format(),
            images: true,
            audit: true,
        }
    }
}

impl ExperimentConfig {
    pub fn for_architecture(name: &str) -> Self {
        Self {
            architecture: ArchitectureSelection::Named(name.to_string()),
            dataset: DatasetConfig::default(),
            images: default_images(),
            methods: Vec::new(),
            seed: 0,
            weights: WeightsConfig::default(),
            hybrid: HybridConfig::default(),
            dlg: BaselineConfig::dlg(),
            cosinetv: BaselineConfig::cosinetv(),
            pretrain: None,
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let archs = self.architecture.resolve()?;
        if self.images.is_empty() {
            return Err(Error::Config("no target images".into()));
        }
        for (_, spec) in &archs {
            self.hybrid.hyperparams(spec.conv_layer_count())?;
        }
        if let Some(p) = &self.pretrain {
            class_indices(&p.classes)?;
            if p.batch_size == 0 {
                return Err(Error::Config("batch_size must be positive".into()));
            }
        }
        if self.dataset.source == DatasetSource::Synthetic {
            class_indices(&self.dataset.classes)?;
        }
        Ok(())
    }
}
