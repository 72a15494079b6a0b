//! Forward/backward engine for shallow tanh CNNs ending in a fully-connected layer.

mod activation;
mod circulant;
pub(crate) mod engine;
mod label;
pub mod scalar;
mod spec;
mod weights;

pub(crate) use activation::clamp_tanh;
pub use activation::{activation_apply, activation_invert, TANH_CLAMP};
pub use circulant::{circulant_expand, grad_circulant_expand};
pub use label::label_from_fc_gradients;
pub use spec::{Activation, ConvGeometry, LayerKind, LayerSpec, NetworkBuilder, NetworkSpec, Shape3};
pub use weights::{InitInfo, LayerParams, WeightSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use engine::{BackwardNeeds, ParamsRef};

/// Values recorded by one forward pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    /// `x⁽ⁱ⁾`, the flattened input of each layer.
    pub inputs: Vec<Vec<f64>>,
    /// `z⁽ⁱ⁾`, each layer's affine output.
    pub pre_activations: Vec<Vec<f64>>,
    /// `x⁽ⁱ⁺¹⁾ = α⁽ⁱ⁾(z⁽ⁱ⁾)`.
    pub post_activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.post_activations.last().expect("network has layers")
    }

    pub fn loss(&self, label: usize) -> Result<f64> {
        cross_entropy_loss(self.logits(), label)
    }
}

/// Loss gradients of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGradients {
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    /// `∇_z L`.
    pub pre_activation: Vec<f64>,
    /// `∇_x L` for the layer input.
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub layers: Vec<LayerGradients>,
    pub loss: f64,
}

impl GradientBundle {
    /// The weight gradients only, which is what a federated client shares
    /// together with the bias gradients.
    pub fn weight_gradients(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| l.weight.clone()).collect()
    }
}

/// Gradients as observed by an attacker: per-layer weight and bias gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedGradients {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Option<Vec<f64>>>,
}

impl From<&GradientBundle> for ObservedGradients {
    fn from(b: &GradientBundle) -> Self {
        Self {
            weight: b.layers.iter().map(|l| l.weight.clone()).collect(),
            bias: b.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }
}

pub(crate) fn params(weights: &WeightSet) -> Vec<ParamsRef<'_, f64>> {
    weights
        .layers
        .iter()
        .map(|p| ParamsRef {
            weight: &p.weight,
            bias: p.bias.as_deref(),
        })
        .collect()
}

/// Runs the network on a flattened `(C, H, W)` image.
pub fn forward(spec: &NetworkSpec, weights: &WeightSet, image: &[f64]) -> Result<ForwardTrace> {
    weights.validate(spec)?;
    if image.len() != spec.input_len() {
        return Err(Error::dim(
            0,
            format!("image has {} values, network expects {}", image.len(), spec.input_len()),
        ));
    }
    let ps = params(weights);
    let pass = engine::forward_from(spec, 0, &ps, image.to_vec());
    Ok(ForwardTrace {
        inputs: pass.inputs,
        pre_activations: pass.pre,
        post_activations: pass.post,
    })
}

/// `−log softmax(logits)[label]`, computed stably.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    Ok(engine::softmax_cross_entropy(logits, label).0)
}

/// Loss gradients for every layer of `trace`.
pub fn backward(spec: &NetworkSpec, weights: &WeightSet, trace: &ForwardTrace, label: usize) -> Result<GradientBundle> {
    weights.validate(spec)?;
    if label >= spec.num_classes {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            spec.num_classes
        )));
    }
    if trace.inputs.len() != spec.depth() {
        return Err(Error::dim(0, "trace does not belong to this network"));
    }
    for (i, x) in trace.inputs.iter().enumerate() {
        if x.len() != spec.input_shape_of(i).len() || trace.post_activations[i].len() != spec.output_shape_of(i).len() {
            return Err(Error::dim(i, "trace entry has the wrong length"));
        }
    }
    if trace.logits().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let pass = engine::Pass {
        start: 0,
        inputs: trace.inputs.clone(),
        pre: trace.pre_activations.clone(),
        post: trace.post_activations.clone(),
    };
    let ps = params(weights);
    let (loss, g) = engine::backward_from(spec, &ps, &pass, label, BackwardNeeds::ALL);
    let layers = g
        .weight
        .into_iter()
        .zip(g.bias)
        .zip(g.pre)
        .zip(g.input)
        .map(|(((weight, bias), pre_activation), input)| LayerGradients {
            weight,
            bias,
            pre_activation,
            input,
        })
        .collect();
    Ok(GradientBundle { layers, loss })
}

/// One forward and backward pass, as a client computing its update would.
pub fn gradients_for(
    spec: &NetworkSpec,
    weights: &WeightSet,
    image: &[f64],
    label: usize,
) -> Result<(ForwardTrace, GradientBundle)> {
    let trace = forward(spec, weights, image)?;
    let grads = backward(spec, weights, &trace, label)?;
    Ok((trace, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_activations() {
        let spec = NetworkSpec::builder(Shape3::new(1, 5, 5))
            .conv(3, 2, 1, 0)
            .fully_connected(3)
            .build()
            .unwrap();
        let w = WeightSet::zeros(&spec);
        let trace = forward(&spec, &w, &[0.7; 25]).unwrap();
        assert!(trace.pre_activations[0].iter().all(|v| *v == 0.0));
        assert!(trace.post_activations[0].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_fc_passes_input_through() {
        let spec = NetworkSpec::new(Shape3::flat(4), vec![LayerSpec::fully_connected(4, 4)], 4).unwrap();
        let mut w = WeightSet::zeros(&spec);
        for i in 0..4 {
            w.layers[0].weight[i * 4 + i] = 1.0;
        }
        let v = [0.3, -1.2, 2.0, 0.0];
        assert_eq!(forward(&spec, &w, &v).unwrap().logits(), &v);
    }

    #[test]
    fn cross_entropy_values() {
        assert!((cross_entropy_loss(&[0.0; 10], 3).unwrap() - 10f64.ln()).abs() < 1e-12);
        let mut confident = [0.0; 10];
        confident[4] = 20.0;
        // ln(1 + 9e⁻²⁰)
        let loss = cross_entropy_loss(&confident, 4).unwrap();
        assert!((loss / 1.855_038_243e-8 - 1.0).abs() < 1e-6 && loss < 2e-8);
        assert!((cross_entropy_loss(&[1.0, 2.0, 3.0], 2).unwrap() - 0.40761).abs() < 1e-5);
        assert!(matches!(cross_entropy_loss(&[1.0, f64::NAN], 0), Err(Error::Numeric(_))));
        assert!(matches!(cross_entropy_loss(&[1.0, 2.0], 2), Err(Error::Usage(_))));
    }

    #[test]
    fn shape_error_names_layer() {
        let spec = NetworkSpec::builder(Shape3::new(1, 5, 5))
            .conv(3, 2, 1, 0)
            .fully_connected(3)
            .build()
            .unwrap();
        let w = WeightSet::random(&spec, 0);
        assert!(matches!(
            forward(&spec, &w, &[0.0; 24]),
            Err(Error::Dimension { layer: 0, .. })
        ));
    }

    #[test]
    fn fc_bias_gradient_equals_pre_activation_gradient() {
        let spec = NetworkSpec::builder(Shape3::new(2, 6, 6))
            .conv(3, 3, 1, 0)
            .fully_connected(10)
            .build()
            .unwrap();
        let w = WeightSet::random(&spec, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..72).map(|_| rng.gen()).collect();
        let (_, g) = gradients_for(&spec, &w, &x, 6).unwrap();
        let fc = &g.layers[1];
        assert_eq!(fc.bias.as_ref().unwrap(), &fc.pre_activation);
    }

    #[test]
    fn confident_prediction_has_vanishing_gradients() {
        let spec = NetworkSpec::new(Shape3::flat(3), vec![LayerSpec::fully_connected(3, 3)], 3).unwrap();
        let mut w = WeightSet::zeros(&spec);
        w.layers[0].bias.as_mut().unwrap()[1] = 40.0;
        let (_, g) = gradients_for(&spec, &w, &[0.5, 0.2, 0.9], 1).unwrap();
        assert!(g.loss < 1e-7);
        let l = &g.layers[0];
        assert!(l
            .weight
            .iter()
            .chain(&l.input)
            .chain(&l.pre_activation)
            .all(|v| v.abs() < 1e-7));
    }
}
