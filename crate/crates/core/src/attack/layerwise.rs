use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_minimize, AdamConfig};
use super::distance::TvNorm;
use super::fc::{fc_invert, recover_logit_gradient};
use super::objective::{observed_slice, Distance, MatchObjective, Weights};
use super::{LayerRecord, Method, ReconstructionReport};
use crate::error::{Error, Result};
use crate::linsys::{build_layer_system, RankTolerance};
use crate::net::engine::{activation_slope, conv_input_grad, fc_input_grad};
use crate::net::{clamp_tanh, Activation, LayerKind, NetworkSpec, ObservedGradients, WeightSet};

/// Correction budget and term weights for one conv layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBudget {
    pub iterations: usize,
    /// `(μ₁, μ₂, μ₃)`: gradient matching, TV, system residual.
    pub mu: [f64; 3],
}

impl LayerBudget {
    pub fn weights(&self) -> Weights {
        Weights {
            matching: self.mu[0],
            tv: self.mu[1],
            system: self.mu[2],
        }
    }

    /// Default budget by conv-layer ordinal (0 is the first conv layer).
    pub fn default_for(ordinal: usize) -> Self {
        match ordinal {
            0 => Self {
                iterations: 10_000,
                mu: [1.0, 1.0, 0.05],
            },
            1 => Self {
                iterations: 8_000,
                mu: [1.0, 1.0, 0.1],
            },
            _ => Self {
                iterations: 1_000,
                mu: [10.0, 0.1, 1.0],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridHyperparams {
    /// One entry per conv layer, in network order.
    pub layers: Vec<LayerBudget>,
    pub step: f64,
    pub tv_norm: TvNorm,
    pub rank_tolerance: RankTolerance,
}

impl HybridHyperparams {
    pub fn defaults(conv_layers: usize) -> Self {
        Self {
            layers: (0..conv_layers).map(LayerBudget::default_for).collect(),
            step: AdamConfig::default().step,
            tv_norm: TvNorm::Mean,
            rank_tolerance: RankTolerance::default(),
        }
    }

    /// No correction anywhere; the attack reduces to the least-squares chain.
    pub fn zero_budget(conv_layers: usize) -> Self {
        let mut hp = Self::defaults(conv_layers);
        for l in &mut hp.layers {
            l.iterations = 0;
        }
        hp
    }

    /// Multiplies every iteration count by `factor` (rounding up).
    pub fn scaled(mut self, factor: f64) -> Self {
        for l in &mut self.layers {
            l.iterations = (l.iterations as f64 * factor).ceil() as usize;
        }
        self
    }

    fn validate(&self, conv_layers: usize) -> Result<()> {
        if self.layers.len() < conv_layers {
            return Err(Error::Config(format!(
                "hyperparameters cover {} conv layers, network has {conv_layers}",
                self.layers.len()
            )));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::Config("step size must be positive".into()));
        }
        if self.layers.iter().flat_map(|l| l.mu).any(|m| !(m.is_finite() && m >= 0.0)) {
            return Err(Error::Config("objective weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_observed(spec: &NetworkSpec, observed: &ObservedGradients, label: usize) -> Result<()> {
    if label >= spec.num_classes {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            spec.num_classes
        )));
    }
    if observed.weight.len() != spec.depth() || observed.bias.len() != spec.depth() {
        return Err(Error::dim(0, "observed gradients do not cover every layer"));
    }
    for (i, l) in spec.layers.iter().enumerate() {
        if observed.weight[i].len() != l.weight_len() {
            return Err(Error::dim(i, "observed weight gradient has the wrong length"));
        }
        match &observed.bias[i] {
            Some(b) if !l.has_bias || b.len() != l.bias_len() => {
                return Err(Error::dim(i, "observed bias gradient does not match the layer"))
            }
            None if l.has_bias => return Err(Error::dim(i, "bias gradient missing")),
            _ => {}
        }
    }
    Ok(())
}

/// Layer-wise least-squares attack: every conv layer is solved by minimum-norm
/// least squares and never corrected.
pub fn rgap_reconstruct(
    spec: &NetworkSpec,
    weights: &WeightSet,
    observed: &ObservedGradients,
    label: usize,
) -> Result<ReconstructionReport> {
    let hp = HybridHyperparams::zero_budget(spec.conv_layer_count());
    layerwise(spec, weights, observed, label, &hp, Method::Rgap)
}

/// The hybrid attack: the least-squares chain with a gradient-matching
/// correction of each conv-layer solution.
///
/// At conv layer `i` the correction minimises
/// `μ₁·cos-dist(∇θ L⁽ⁱ⁾(x), observed ∇θ of layers ≥ i) + μ₂·TV(x) + μ₃·‖u·x − v‖²`
/// with Adam from `x_LS` and keeps the best iterate.
pub fn hybrid_reconstruct(
    spec: &NetworkSpec,
    weights: &WeightSet,
    observed: &ObservedGradients,
    label: usize,
    hyperparams: &HybridHyperparams,
) -> Result<ReconstructionReport> {
    layerwise(spec, weights, observed, label, hyperparams, Method::Hybrid)
}

fn layerwise(
    spec: &NetworkSpec,
    weights: &WeightSet,
    observed: &ObservedGradients,
    label: usize,
    hp: &HybridHyperparams,
    method: Method,
) -> Result<ReconstructionReport> {
    let started = Instant::now();
    weights.validate(spec)?;
    check_observed(spec, observed, label)?;
    hp.validate(spec.conv_layer_count())?;
    let d = spec.depth();
    let last = d - 1;

    // ∇ of the logits: the bias gradient when there is a bias, otherwise
    // recovered from the weight gradient's rank-one structure.
    let mut grad_z = match &observed.bias[last] {
        Some(b) => b.clone(),
        None => recover_logit_gradient(&weights.layers[last].weight, &observed.weight[last], label, spec.num_classes)?,
    };
    let mut x_next: Vec<f64> = Vec::new();
    let mut records = Vec::with_capacity(d);
    let mut total_iters = 0;
    let mut conv_ordinal = spec.conv_layer_count();

    for i in (0..d).rev() {
        let layer = &spec.layers[i];
        if i < last {
            // ∇x⁽ⁱ⁺¹⁾ from the layer above, then ∇z⁽ⁱ⁾ through the activation
            // slope at the current estimate.
            let above = &spec.layers[i + 1];
            let w_above = &weights.layers[i + 1].weight;
            let mut gx = vec![0.0; x_next.len()];
            match above.kind {
                LayerKind::Conv => conv_input_grad(&spec.conv_geometry(i + 1).expect("conv"), w_above, &grad_z, &mut gx),
                LayerKind::FullyConnected => fc_input_grad(w_above, &grad_z, &mut gx),
            }
            grad_z = gx
                .iter()
                .zip(&x_next)
                .map(|(&g, &y)| {
                    let y = if layer.activation == Activation::Tanh {
                        clamp_tanh(y)
                    } else {
                        y
                    };
                    g * activation_slope(layer.activation, y)
                })
                .collect();
        }
        let estimate = match layer.kind {
            LayerKind::FullyConnected => {
                let x = fc_invert(&observed.weight[i], &grad_z)?;
                records.push(LayerRecord::fully_connected(i, x.clone()));
                x
            }
            LayerKind::Conv => {
                conv_ordinal -= 1;
                let budget = hp.layers[conv_ordinal];
                let mut system = build_layer_system(spec, i, &weights.layers[i], &x_next, &observed.weight[i], &grad_z)?;
                let ls = system.solve(hp.rank_tolerance)?;
                let ls_residual = system.residual_norm(&ls.x);
                let mut record = LayerRecord {
                    layer: i,
                    kind: LayerKind::Conv,
                    estimate: Vec::new(),
                    ls_residual: Some(ls_residual),
                    residual: Some(ls_residual),
                    initial_objective: None,
                    objective: None,
                    iterations: 0,
                    numeric_rank: Some(ls.diagnostics.numeric_rank),
                    unknowns: Some(system.n_i),
                    condition: Some(ls.diagnostics.condition_estimate),
                    matching_dropped: 0,
                };
                let x = if budget.iterations == 0 {
                    ls.x
                } else {
                    // the dense matrix is no longer needed; the operator applies u
                    system.u = ndarray::Array2::zeros((0, 0));
                    let objective = MatchObjective::new(
                        spec,
                        weights,
                        i,
                        label,
                        observed_slice(observed, i),
                        Distance::Cosine,
                        budget.weights(),
                    )?
                    .with_tv_norm(hp.tv_norm)
                    .with_system(&system.operator, &system.v)?;
                    let mut dropped = 0;
                    let out = adam_minimize(
                        |x| {
                            let e = objective.evaluate(x)?;
                            if e.matching.is_none() && budget.mu[0] > 0.0 {
                                dropped += 1;
                            }
                            Ok((e.value, e.grad))
                        },
                        &ls.x,
                        budget.iterations,
                        AdamConfig::with_step(hp.step),
                    )
                    .map_err(|e| match e {
                        Error::Initialization => Error::Numeric(format!("hybrid objective not finite at x_LS of layer {i}")),
                        other => other,
                    })?;
                    record.initial_objective = Some(out.initial_value);
                    record.objective = Some(out.value);
                    record.iterations = out.iterations;
                    record.matching_dropped = dropped;
                    record.residual = Some(system.residual_norm(&out.x));
                    total_iters += out.iterations;
                    out.x
                };
                record.estimate = x.clone();
                records.push(record);
                x
            }
        };
        x_next = estimate;
    }

    Ok(ReconstructionReport {
        method,
        image: x_next,
        layers: records,
        iterations: total_iters,
        objective: None,
        optimizer: format!("adam(lr={})", hp.step),
        seed: None,
        wall_time_secs: started.elapsed().as_secs_f64(),
        score: None,
    })
}
