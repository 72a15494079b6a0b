//! Image quality scores and the rank-deficiency security score `c(M)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{build_layer_system, RankTolerance};
use crate::net::{gradients_for, InitInfo, NetworkSpec, WeightSet};

/// Reported in place of an infinite PSNR.
pub const PSNR_CAP: f64 = 200.0;

/// Mean squared difference over all pixels.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(0, format!("images of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::Usage("empty image".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `20·log10(255) − 10·log10(mse)` for `[0, 1]`-scaled pixels, capped at
/// [`PSNR_CAP`]. A non-finite MSE gives negative infinity.
pub fn psnr(mse: f64) -> f64 {
    if mse.is_nan() {
        return f64::NAN;
    }
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (20.0 * 255f64.log10() - 10.0 * mse.log10()).min(PSNR_CAP)
}

/// PSNR of two images.
pub fn psnr_of(a: &[f64], b: &[f64]) -> Result<f64> {
    mse(a, b).map(psnr)
}

/// How `c(M)` is turned into an integer for display.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    TowardZero,
}

/// `c(M)` at full precision with both integer renderings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CMetric {
    pub exact: f64,
    pub rounded: i64,
    pub truncated: i64,
}

impl CMetric {
    pub fn new(exact: f64) -> Self {
        Self {
            exact,
            rounded: exact.round() as i64,
            truncated: exact.trunc() as i64,
        }
    }

    pub fn display(&self, rule: Rounding) -> i64 {
        match rule {
            Rounding::HalfAwayFromZero => self.rounded,
            Rounding::TowardZero => self.truncated,
        }
    }
}

/// `Σᵢ ((d − (i − 1))/d)·rdᵢ` over conv layers `i = 1..d`.
pub fn c_metric_from_deficiencies(rd: &[i64]) -> CMetric {
    let d = rd.len() as f64;
    let exact = rd.iter().enumerate().map(|(k, &r)| (d - k as f64) / d * r as f64).sum();
    CMetric::new(exact)
}

/// Position weight of the `ordinal`-th conv layer (0-based) among `d`.
pub fn layer_weight(ordinal: usize, d: usize) -> f64 {
    (d - ordinal) as f64 / d as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAudit {
    pub layer: usize,
    pub rank: usize,
    /// Unknowns of the layer system (input length, plus one for a bias).
    pub unknowns: usize,
    pub rows: usize,
    pub deficiency: i64,
    pub weight: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityAudit {
    pub layers: Vec<LayerAudit>,
    pub c_metric: CMetric,
    pub init: Option<InitInfo>,
    pub rank_tolerance: RankTolerance,
}

impl SecurityAudit {
    pub fn deficiencies(&self) -> Vec<i64> {
        self.layers.iter().map(|l| l.deficiency).collect()
    }
}

/// Builds each conv layer's system from the true trace of `probe` and scores
/// the rank deficiencies.
pub fn security_metric(
    spec: &NetworkSpec,
    weights: &WeightSet,
    probe: &[f64],
    label: usize,
    tol: RankTolerance,
) -> Result<SecurityAudit> {
    let (trace, grads) = gradients_for(spec, weights, probe, label)?;
    let d = spec.conv_layer_count();
    let mut layers = Vec::with_capacity(d);
    for (ordinal, i) in (0..spec.depth()).filter(|&i| spec.layers[i].is_conv()).enumerate() {
        let mut sys = build_layer_system(
            spec,
            i,
            &weights.layers[i],
            &trace.post_activations[i],
            &grads.layers[i].weight,
            &grads.layers[i].pre_activation,
        )?;
        let diag = sys.analyze(tol)?.clone();
        layers.push(LayerAudit {
            layer: i,
            rank: diag.numeric_rank,
            unknowns: sys.n_i,
            rows: sys.rows(),
            deficiency: diag.numeric_rank as i64 - sys.n_i as i64,
            weight: layer_weight(ordinal, d),
            condition: diag.condition_estimate,
        });
    }
    let rd: Vec<i64> = layers.iter().map(|l| l.deficiency).collect();
    Ok(SecurityAudit {
        layers,
        c_metric: c_metric_from_deficiencies(&rd),
        init: weights.init,
        rank_tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_and_psnr() {
        assert_eq!(mse(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), 0.0);
        assert_eq!(psnr(0.0), PSNR_CAP);
        let a = [0.1; 12];
        let b = [0.2; 12];
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        // 20·log10(255) + 20
        assert!((psnr(0.01) - 68.130_803_6).abs() < 1e-6);
        assert!((psnr(0.0346) - 62.74).abs() < 0.005);
        assert!(psnr(f64::INFINITY) == f64::NEG_INFINITY);
        assert!(matches!(mse(&[0.0], &[0.0, 1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn c_metric_arithmetic() {
        let c = c_metric_from_deficiencies(&[0, -3965, -386]);
        assert!((c.exact + 2772.0).abs() < 1e-9);
        assert_eq!(c_metric_from_deficiencies(&[-1470, -1050]).rounded, -1995);
        assert_eq!(c_metric_from_deficiencies(&[0, 0]).exact, 0.0);
        let half = c_metric_from_deficiencies(&[0, -4533]);
        assert_eq!(half.exact, -2266.5);
        assert_eq!((half.rounded, half.truncated), (-2267, -2266));
        assert_eq!(half.display(Rounding::TowardZero), -2266);
    }
}
