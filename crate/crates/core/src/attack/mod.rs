//! Reconstruction attacks.
//!
//! [`rgap_reconstruct`] solves each layer's system back to front.
//! [`hybrid_reconstruct`] does the same but corrects every conv-layer
//! solution by minimising gradient distance, total variation and the system
//! residual. [`dlg_reconstruct`] and [`cosinetv_reconstruct`] are the pure
//! gradient-matching baselines.

mod adam;
mod distance;
mod fc;
mod layerwise;
mod matching;
mod objective;

pub use adam::{adam_minimize, AdamConfig, AdamOutcome, AdamState};
pub use distance::{cosine_distance, total_variation, total_variation_grad, TvNorm};
pub use fc::{fc_invert, fc_invert_with_bias, recover_logit_gradient, PIVOT_FLOOR};
pub use layerwise::{hybrid_reconstruct, rgap_reconstruct, HybridHyperparams, LayerBudget};
pub use matching::{cosinetv_reconstruct, dlg_reconstruct, MatchingConfig, COSINETV_TV_WEIGHT};
pub use objective::{observed_slice, truncated_gradients, Distance, Evaluation, MatchObjective, TruncatedGradients, Weights};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::{mse, psnr};
use crate::net::LayerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rgap,
    Hybrid,
    Dlg,
    CosineTv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Rgap, Method::Hybrid, Method::Dlg, Method::CosineTv];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rgap => "rgap",
            Method::Hybrid => "hybrid",
            Method::Dlg => "dlg",
            Method::CosineTv => "cosinetv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`; valid: rgap, hybrid, dlg, cosinetv")))
    }
}

/// What happened at one layer of a layer-wise attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub layer: usize,
    pub kind: LayerKind,
    /// `x̄⁽ⁱ⁾`, the final estimate of this layer's input.
    pub estimate: Vec<f64>,
    /// `‖u·x_LS − v‖` for the least-squares solution.
    pub ls_residual: Option<f64>,
    /// `‖u·x̄ − v‖` for the returned estimate.
    pub residual: Option<f64>,
    pub initial_objective: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub numeric_rank: Option<usize>,
    pub unknowns: Option<usize>,
    pub condition: Option<f64>,
    /// Evaluations in which the cosine term was undefined and left out.
    pub matching_dropped: usize,
}

impl LayerRecord {
    fn fully_connected(layer: usize, estimate: Vec<f64>) -> Self {
        Self {
            layer,
            kind: LayerKind::FullyConnected,
            estimate,
            ls_residual: None,
            residual: None,
            initial_objective: None,
            objective: None,
            iterations: 0,
            numeric_rank: None,
            unknowns: None,
            condition: None,
            matching_dropped: 0,
        }
    }
}

/// Image quality against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub mse: f64,
    pub psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub method: Method,
    /// Reconstructed input, unclamped.
    pub image: Vec<f64>,
    /// Layer-wise attacks only, ordered from the last layer to the first.
    pub layers: Vec<LayerRecord>,
    /// Total optimiser updates.
    pub iterations: usize,
    /// Final objective of a gradient-matching baseline.
    pub objective: Option<f64>,
    pub optimizer: String,
    pub seed: Option<u64>,
    pub wall_time_secs: f64,
    pub score: Option<Score>,
}

impl ReconstructionReport {
    /// Fills in [`Score`] against `truth`.
    pub fn score_against(&mut self, truth: &[f64]) -> crate::Result<Score> {
        let m = mse(&self.image, truth)?;
        let s = Score { mse: m, psnr: psnr(m) };
        self.score = Some(s);
        Ok(s)
    }

    pub fn layer(&self, index: usize) -> Option<&LayerRecord> {
        self.layers.iter().find(|l| l.layer == index)
    }
}
