use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::NetworkSpec;
use crate::error::{Error, Result};

/// Weight and optional bias of one layer.
///
/// Conv kernels are stored `(out, in, k, k)` row-major; FC weights `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

/// How a [`WeightSet`] was initialised; carried into reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitInfo {
    pub seed: u64,
    /// Each layer draws from `U(-scale/√fan_in, +scale/√fan_in)`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub layers: Vec<LayerParams>,
    pub init: Option<InitInfo>,
}

impl WeightSet {
    /// Uniform `±1/√fan_in` initialisation for weights and biases.
    pub fn random(spec: &NetworkSpec, seed: u64) -> Self {
        Self::random_scaled(spec, seed, 1.0)
    }

    pub fn random_scaled(spec: &NetworkSpec, seed: u64, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let bound = scale / (l.fan_in() as f64).sqrt();
                let weight = (0..l.weight_len()).map(|_| rng.gen_range(-bound..bound)).collect();
                let bias = l
                    .has_bias
                    .then(|| (0..l.out_channels).map(|_| rng.gen_range(-bound..bound)).collect());
                LayerParams { weight, bias }
            })
            .collect();
        Self {
            layers,
            init: Some(InitInfo { seed, scale }),
        }
    }

    /// All-zero weights (and biases where the spec has them).
    pub fn zeros(spec: &NetworkSpec) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: vec![0.0; l.weight_len()],
                bias: l.has_bias.then(|| vec![0.0; l.out_channels]),
            })
            .collect();
        Self { layers, init: None }
    }

    /// Checks every layer's dimensions against `spec` and that all entries are finite.
    pub fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.depth() {
            return Err(Error::InvalidNetwork(format!(
                "weight set has {} layers, network has {}",
                self.layers.len(),
                spec.depth()
            )));
        }
        for (i, (p, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            if p.weight.len() != l.weight_len() {
                return Err(Error::dim(
                    i,
                    format!("weight has {} entries, expected {}", p.weight.len(), l.weight_len()),
                ));
            }
            match (&p.bias, l.has_bias) {
                (Some(b), true) if b.len() != l.out_channels => {
                    return Err(Error::dim(
                        i,
                        format!("bias has {} entries, expected {}", b.len(), l.out_channels),
                    ))
                }
                (None, true) => return Err(Error::dim(i, "layer expects a bias")),
                (Some(_), false) => return Err(Error::dim(i, "layer is bias-free but a bias was given")),
                _ => {}
            }
            let finite = p.weight.iter().chain(p.bias.iter().flatten()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Numeric(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|p| p.weight.len() + p.bias.as_ref().map_or(0, Vec::len))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::Shape3;

    #[test]
    fn random_init_respects_bounds_and_is_seeded() {
        let spec = NetworkSpec::builder(Shape3::new(3, 8, 8))
            .conv(3, 4, 1, 0)
            .fully_connected(10)
            .build()
            .unwrap();
        let a = WeightSet::random(&spec, 7);
        let b = WeightSet::random(&spec, 7);
        let c = WeightSet::random(&spec, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate(&spec).unwrap();
        let bound = 1.0 / 27f64.sqrt();
        assert!(a.layers[0].weight.iter().all(|w| w.abs() < bound));
        assert!(a.layers[0].bias.is_none());
        assert_eq!(a.layers[1].bias.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn validate_catches_wrong_sizes() {
        let spec = NetworkSpec::builder(Shape3::new(1, 4, 4))
            .conv(3, 2, 1, 0)
            .fully_connected(3)
            .build()
            .unwrap();
        let mut w = WeightSet::random(&spec, 1);
        w.layers[0].weight.pop();
        assert!(matches!(w.validate(&spec), Err(Error::Dimension { layer: 0, .. })));
        let mut w = WeightSet::random(&spec, 1);
        w.layers[1].weight[0] = f64::NAN;
        assert!(matches!(w.validate(&spec), Err(Error::Numeric(_))));
    }
}
