//! Gradient-matching objectives and their input gradients.
//!
//! The matching term depends on `x` through the parameter gradient
//! `g(x) = ∇_θ L(x)`. Its input gradient is `∇ₓ⟨g(x), q⟩` with
//! `q = ∂D/∂g`, which equals the tangent of `∇ₓL` when the parameters are
//! perturbed along `q`; one dual-number pass computes it.

use serde::{Deserialize, Serialize};

use super::distance::{cosine_distance_grad, tv_value_grad, TvNorm};
use crate::error::{Error, Result};
use crate::linsys::SystemOperator;
use crate::net::engine::{backward_from, forward_from, BackwardNeeds, ParamsRef};
use crate::net::scalar::Dual;
use crate::net::{params, NetworkSpec, ObservedGradients, Shape3, WeightSet};

/// Parameter gradients of the sub-network that starts at some layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGradients {
    pub start: usize,
    /// Entry `k` belongs to layer `start + k`.
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Option<Vec<f64>>>,
    pub loss: f64,
}

impl TruncatedGradients {
    /// Weight and bias gradients concatenated layer by layer.
    pub fn flatten(&self) -> Vec<f64> {
        flatten(&self.weight, &self.bias)
    }
}

fn flatten(weight: &[Vec<f64>], bias: &[Option<Vec<f64>>]) -> Vec<f64> {
    let mut out = Vec::new();
    for (w, b) in weight.iter().zip(bias) {
        out.extend_from_slice(w);
        if let Some(b) = b {
            out.extend_from_slice(b);
        }
    }
    out
}

/// Observed gradients of layers `start..` in the layout of
/// [`TruncatedGradients::flatten`].
pub fn observed_slice(observed: &ObservedGradients, start: usize) -> Vec<f64> {
    flatten(&observed.weight[start..], &observed.bias[start..])
}

/// Runs forward and backward on the layers from `start` on, with `x` as the
/// input of layer `start`.
pub fn truncated_gradients(
    spec: &NetworkSpec,
    weights: &WeightSet,
    x: &[f64],
    start: usize,
    label: usize,
) -> Result<TruncatedGradients> {
    weights.validate(spec)?;
    check_start(spec, start, x.len())?;
    if label >= spec.num_classes {
        return Err(Error::Usage(format!(
            "label {label} out of range for {} classes",
            spec.num_classes
        )));
    }
    let ps = params(weights);
    let pass = forward_from(spec, start, &ps[start..], x.to_vec());
    let needs = BackwardNeeds {
        weights: true,
        first_input: false,
    };
    let (loss, g) = backward_from(spec, &ps[start..], &pass, label, needs);
    Ok(TruncatedGradients {
        start,
        weight: g.weight,
        bias: g.bias,
        loss,
    })
}

fn check_start(spec: &NetworkSpec, start: usize, len: usize) -> Result<()> {
    if start >= spec.depth() {
        return Err(Error::Usage(format!(
            "start layer {start} beyond network depth {}",
            spec.depth()
        )));
    }
    let want = spec.input_shape_of(start).len();
    if len != want {
        return Err(Error::dim(start, format!("input has {len} values, layer expects {want}")));
    }
    Ok(())
}

/// Distance between candidate and observed gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Cosine,
    /// `‖g − g*‖²`.
    SquaredL2,
}

/// Weights of the three objective terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Gradient matching.
    pub matching: f64,
    pub tv: f64,
    /// Squared linear-system residual.
    pub system: f64,
}

/// Value, gradient and term breakdown at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Unweighted matching distance, `None` when it was undefined.
    pub matching: Option<f64>,
    pub tv: f64,
    /// Unweighted squared residual.
    pub residual_sq: f64,
}

/// `μ₁·D[g(x), g*] + μ₂·TV(x) + μ₃·‖u·x − v‖²` over the input of layer `start`.
///
/// When `g(x)` or `g*` is zero the cosine distance is undefined; the matching
/// term is then left out of that evaluation and `Evaluation::matching` is
/// `None`.
pub struct MatchObjective<'a> {
    spec: &'a NetworkSpec,
    weights: &'a WeightSet,
    start: usize,
    label: usize,
    target: Vec<f64>,
    distance: Distance,
    mu: Weights,
    tv_norm: TvNorm,
    shape: Shape3,
    system: Option<(&'a SystemOperator, &'a [f64])>,
}

impl<'a> MatchObjective<'a> {
    pub fn new(
        spec: &'a NetworkSpec,
        weights: &'a WeightSet,
        start: usize,
        label: usize,
        target: Vec<f64>,
        distance: Distance,
        mu: Weights,
    ) -> Result<Self> {
        weights.validate(spec)?;
        check_start(spec, start, spec.input_shape_of(start).len())?;
        if label >= spec.num_classes {
            return Err(Error::Usage(format!(
                "label {label} out of range for {} classes",
                spec.num_classes
            )));
        }
        let want: usize = spec.layers[start..]
            .iter()
            .map(|l| l.weight_len() + if l.has_bias { l.bias_len() } else { 0 })
            .sum();
        if target.len() != want {
            return Err(Error::dim(
                start,
                format!("target gradient has {} entries, expected {want}", target.len()),
            ));
        }
        if [mu.matching, mu.tv, mu.system].iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Usage("objective weights must be finite and non-negative".into()));
        }
        Ok(Self {
            spec,
            weights,
            start,
            label,
            target,
            distance,
            mu,
            tv_norm: TvNorm::Mean,
            shape: spec.input_shape_of(start),
            system: None,
        })
    }

    pub fn with_tv_norm(mut self, norm: TvNorm) -> Self {
        self.tv_norm = norm;
        self
    }

    /// Adds the residual term for `u` (as an operator) and `v`.
    pub fn with_system(mut self, op: &'a SystemOperator, v: &'a [f64]) -> Result<Self> {
        if op.cols() != self.shape.len() || v.len() != op.rows() {
            return Err(Error::dim(self.start, "system does not match the layer input"));
        }
        self.system = Some((op, v));
        Ok(self)
    }

    pub fn input_len(&self) -> usize {
        self.shape.len()
    }

    /// Candidate gradient `g(x)` in flattened layout.
    fn candidate(&self, x: &[f64]) -> Vec<f64> {
        let ps = params(self.weights);
        let pass = forward_from(self.spec, self.start, &ps[self.start..], x.to_vec());
        let needs = BackwardNeeds {
            weights: true,
            first_input: false,
        };
        let (_, g) = backward_from(self.spec, &ps[self.start..], &pass, self.label, needs);
        flatten(&g.weight, &g.bias)
    }

    /// Distance and `∂D/∂g`.
    fn matching(&self, g: &[f64], want_grad: bool) -> Option<(f64, Vec<f64>)> {
        match self.distance {
            Distance::Cosine => cosine_distance_grad(g, &self.target),
            Distance::SquaredL2 => {
                let mut d = 0.0;
                let mut q = if want_grad { Vec::with_capacity(g.len()) } else { Vec::new() };
                for (a, b) in g.iter().zip(&self.target) {
                    d += (a - b) * (a - b);
                    if want_grad {
                        q.push(2.0 * (a - b));
                    }
                }
                Some((d, q))
            }
        }
    }

    /// `∇ₓ⟨g(x), q⟩` via one dual-number pass with parameters seeded by `q`.
    fn pullback(&self, x: &[f64], q: &[f64]) -> Vec<f64> {
        let mut offset = 0;
        let mut owned: Vec<(Vec<Dual>, Option<Vec<Dual>>)> = Vec::new();
        for p in &self.weights.layers[self.start..] {
            let mut seed = |vals: &[f64]| {
                let out: Vec<Dual> = vals
                    .iter()
                    .zip(&q[offset..offset + vals.len()])
                    .map(|(&v, &t)| Dual::new(v, t))
                    .collect();
                offset += vals.len();
                out
            };
            let w = seed(&p.weight);
            let b = p.bias.as_deref().map(&mut seed);
            owned.push((w, b));
        }
        let ps: Vec<ParamsRef<'_, Dual>> = owned
            .iter()
            .map(|(w, b)| ParamsRef {
                weight: w,
                bias: b.as_deref(),
            })
            .collect();
        let xd: Vec<Dual> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
        let pass = forward_from(self.spec, self.start, &ps, xd);
        let needs = BackwardNeeds {
            weights: false,
            first_input: true,
        };
        let (_, g) = backward_from(self.spec, &ps, &pass, self.label, needs);
        g.input[0].iter().map(|d| d.eps).collect()
    }

    /// Objective value only.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut total = 0.0;
        if self.mu.matching > 0.0 {
            if let Some((d, _)) = self.matching(&self.candidate(x), false) {
                total += self.mu.matching * d;
            }
        }
        if self.mu.tv > 0.0 {
            total += self.mu.tv * tv_value_grad(x, self.shape, self.tv_norm, false).0;
        }
        if let Some((op, v)) = self.system {
            if self.mu.system > 0.0 {
                total += self.mu.system * op.residual(x, v).iter().map(|r| r * r).sum::<f64>();
            }
        }
        Ok(total)
    }

    /// Value and gradient.
    pub fn evaluate(&self, x: &[f64]) -> Result<Evaluation> {
        self.check(x)?;
        let mut grad = vec![0.0; x.len()];
        let mut value = 0.0;
        let mut matching = None;
        if self.mu.matching > 0.0 {
            if let Some((d, q)) = self.matching(&self.candidate(x), true) {
                matching = Some(d);
                value += self.mu.matching * d;
                let q: Vec<f64> = q.iter().map(|v| v * self.mu.matching).collect();
                for (g, p) in grad.iter_mut().zip(self.pullback(x, &q)) {
                    *g += p;
                }
            }
        }
        let (tv, tv_grad) = tv_value_grad(x, self.shape, self.tv_norm, self.mu.tv > 0.0);
        if self.mu.tv > 0.0 {
            value += self.mu.tv * tv;
            for (g, t) in grad.iter_mut().zip(tv_grad) {
                *g += self.mu.tv * t;
            }
        }
        let mut residual_sq = 0.0;
        if let Some((op, v)) = self.system {
            let r = op.residual(x, v);
            residual_sq = r.iter().map(|r| r * r).sum();
            if self.mu.system > 0.0 {
                value += self.mu.system * residual_sq;
                for (g, t) in grad.iter_mut().zip(op.apply_transpose(&r)) {
                    *g += 2.0 * self.mu.system * t;
                }
            }
        }
        Ok(Evaluation {
            value,
            grad,
            matching,
            tv,
            residual_sq,
        })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.shape.len() {
            return Err(Error::dim(
                self.start,
                format!("input has {} values, layer expects {}", x.len(), self.shape.len()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::gradients_for;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net() -> NetworkSpec {
        NetworkSpec::builder(Shape3::new(2, 7, 7))
            .conv(3, 3, 1, 0)
            .conv(3, 4, 2, 1)
            .fully_connected(5)
            .build()
            .unwrap()
    }

    #[test]
    fn truncated_from_zero_is_full_backward() {
        let spec = net();
        let w = WeightSet::random(&spec, 1);
        let x: Vec<f64> = (0..98).map(|i| (i as f64 * 0.1).cos() * 0.5 + 0.5).collect();
        let (trace, full) = gradients_for(&spec, &w, &x, 2).unwrap();
        let t0 = truncated_gradients(&spec, &w, &x, 0, 2).unwrap();
        assert_eq!(t0.weight, full.weight_gradients());
        let t1 = truncated_gradients(&spec, &w, &trace.inputs[1], 1, 2).unwrap();
        for k in 0..2 {
            assert!(t1.weight[k]
                .iter()
                .zip(&full.layers[k + 1].weight)
                .all(|(a, b)| (a - b).abs() < 1e-14));
        }
        assert!(matches!(
            truncated_gradients(&spec, &w, &x[..10], 0, 2),
            Err(Error::Dimension { layer: 0, .. })
        ));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = net();
        let w = WeightSet::random(&spec, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x_true: Vec<f64> = (0..98).map(|_| rng.gen()).collect();
        let (_, g) = gradients_for(&spec, &w, &x_true, 1).unwrap();
        let target = observed_slice(&ObservedGradients::from(&g), 0);
        for distance in [Distance::Cosine, Distance::SquaredL2] {
            let mu = Weights {
                matching: 1.0,
                tv: 0.0,
                system: 0.0,
            };
            let obj = MatchObjective::new(&spec, &w, 0, 1, target.clone(), distance, mu).unwrap();
            let x: Vec<f64> = (0..98).map(|_| rng.gen()).collect();
            let e = obj.evaluate(&x).unwrap();
            let dir: Vec<f64> = (0..98).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-5;
            let shift = |s: f64| x.iter().zip(&dir).map(|(a, d)| a + s * d).collect::<Vec<_>>();
            let fd = (obj.value(&shift(h)).unwrap() - obj.value(&shift(-h)).unwrap()) / (2.0 * h);
            let an: f64 = e.grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-8), "{distance:?}: {fd} vs {an}");
        }
    }

    #[test]
    fn zero_target_drops_cosine_term() {
        let spec = net();
        let w = WeightSet::random(&spec, 2);
        let n = spec
            .layers
            .iter()
            .map(|l| l.weight_len() + l.bias_len() * l.has_bias as usize)
            .sum();
        let mu = Weights {
            matching: 1.0,
            tv: 1.0,
            system: 0.0,
        };
        let obj = MatchObjective::new(&spec, &w, 0, 0, vec![0.0; n], Distance::Cosine, mu).unwrap();
        let e = obj.evaluate(&[0.5; 98]).unwrap();
        assert!(e.matching.is_none());
        assert_eq!(e.value, 0.0);
    }
}
