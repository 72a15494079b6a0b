use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_minimize, AdamConfig};
use super::distance::TvNorm;
use super::layerwise::check_observed;
use super::objective::{observed_slice, Distance, MatchObjective, Weights};
use super::{Method, ReconstructionReport};
use crate::error::{Error, Result};
use crate::net::{NetworkSpec, ObservedGradients, WeightSet};

/// Settings of a gradient-matching baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingConfig {
    pub iterations: usize,
    pub step: f64,
    /// TV weight; ignored by DLG.
    pub tv_weight: f64,
    pub tv_norm: TvNorm,
    /// Seeds the uniform `[0, 1]` dummy image.
    pub seed: u64,
    /// Explicit starting image instead of the random one.
    #[serde(skip)]
    pub start: Option<Vec<f64>>,
}

impl MatchingConfig {
    pub fn dlg(seed: u64) -> Self {
        Self {
            iterations: 300,
            step: AdamConfig::default().step,
            tv_weight: 0.0,
            tv_norm: TvNorm::Mean,
            seed,
            start: None,
        }
    }

    pub fn cosinetv(seed: u64) -> Self {
        Self {
            iterations: 4800,
            tv_weight: COSINETV_TV_WEIGHT,
            ..Self::dlg(seed)
        }
    }
}

/// Default TV weight of the cosine baseline.
pub const COSINETV_TV_WEIGHT: f64 = 1e-4;

/// Gradient matching with the squared L2 distance, label known.
pub fn dlg_reconstruct(
    spec: &NetworkSpec,
    weights: &WeightSet,
    observed: &ObservedGradients,
    label: usize,
    cfg: &MatchingConfig,
) -> Result<ReconstructionReport> {
    let mu = Weights {
        matching: 1.0,
        tv: 0.0,
        system: 0.0,
    };
    run(spec, weights, observed, label, cfg, Distance::SquaredL2, mu, Method::Dlg)
}

/// Gradient matching with the cosine distance plus `λ·TV`.
pub fn cosinetv_reconstruct(
    spec: &NetworkSpec,
    weights: &WeightSet,
    observed: &ObservedGradients,
    label: usize,
    cfg: &MatchingConfig,
) -> Result<ReconstructionReport> {
    let mu = Weights {
        matching: 1.0,
        tv: cfg.tv_weight,
        system: 0.0,
    };
    run(spec, weights, observed, label, cfg, Distance::Cosine, mu, Method::CosineTv)
}

#[allow(clippy::too_many_arguments)]
fn run(
    spec: &NetworkSpec,
    weights: &WeightSet,
    observed: &ObservedGradients,
    label: usize,
    cfg: &MatchingConfig,
    distance: Distance,
    mu: Weights,
    method: Method,
) -> Result<ReconstructionReport> {
    let started = Instant::now();
    check_observed(spec, observed, label)?;
    let objective =
        MatchObjective::new(spec, weights, 0, label, observed_slice(observed, 0), distance, mu)?.with_tv_norm(cfg.tv_norm);
    let x0 = match &cfg.start {
        Some(x) if x.len() != spec.input_len() => return Err(Error::dim(0, "starting image has the wrong length")),
        Some(x) => x.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..spec.input_len()).map(|_| rng.gen::<f64>()).collect()
        }
    };
    let out = adam_minimize(
        |x| {
            let e = objective.evaluate(x)?;
            Ok((e.value, e.grad))
        },
        &x0,
        cfg.iterations,
        AdamConfig::with_step(cfg.step),
    )?;
    Ok(ReconstructionReport {
        method,
        image: out.x,
        layers: Vec::new(),
        iterations: out.iterations,
        objective: Some(out.value),
        optimizer: format!("adam(lr={})", cfg.step),
        seed: Some(cfg.seed),
        wall_time_secs: started.elapsed().as_secs_f64(),
        score: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{gradients_for, Shape3};

    #[test]
    fn true_image_is_a_fixed_point() {
        let spec = NetworkSpec::builder(Shape3::new(1, 6, 6))
            .conv(3, 2, 1, 0)
            .fully_connected(4)
            .build()
            .unwrap();
        let w = WeightSet::random(&spec, 2);
        let x: Vec<f64> = (0..36).map(|i| (i as f64 * 0.3).sin() * 0.5 + 0.5).collect();
        let (_, g) = gradients_for(&spec, &w, &x, 1).unwrap();
        let obs = ObservedGradients::from(&g);
        let cfg = MatchingConfig {
            start: Some(x.clone()),
            iterations: 20,
            ..MatchingConfig::dlg(0)
        };
        let r = dlg_reconstruct(&spec, &w, &obs, 1, &cfg).unwrap();
        assert_eq!(r.objective, Some(0.0));
        assert_eq!(r.image, x);
        let cfg = MatchingConfig { tv_weight: 1e-6, ..cfg };
        let r = cosinetv_reconstruct(&spec, &w, &obs, 1, &cfg).unwrap();
        assert!(r.objective.unwrap() < 1e-4);
    }

    #[test]
    fn random_start_is_seeded() {
        let spec = NetworkSpec::builder(Shape3::new(1, 5, 5))
            .conv(3, 2, 1, 0)
            .fully_connected(3)
            .build()
            .unwrap();
        let w = WeightSet::random(&spec, 2);
        let (_, g) = gradients_for(&spec, &w, &[0.5; 25], 0).unwrap();
        let obs = ObservedGradients::from(&g);
        let cfg = MatchingConfig {
            iterations: 5,
            ..MatchingConfig::dlg(9)
        };
        let a = dlg_reconstruct(&spec, &w, &obs, 0, &cfg).unwrap();
        let b = dlg_reconstruct(&spec, &w, &obs, 0, &cfg).unwrap();
        assert_eq!(a.image, b.image);
    }
}
