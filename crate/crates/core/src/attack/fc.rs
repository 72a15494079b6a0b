use crate::error::{Error, Result};
use crate::net::engine::softmax_cross_entropy;

/// Below this magnitude a pre-activation gradient entry is not used as pivot.
pub const PIVOT_FLOOR: f64 = 1e-12;

fn check_shape(weight_grad: &[f64], rows: usize) -> Result<usize> {
    if rows == 0 || !weight_grad.len().is_multiple_of(rows) {
        return Err(Error::dim(
            0,
            format!("weight gradient of length {} is not a {rows}-row matrix", weight_grad.len()),
        ));
    }
    Ok(weight_grad.len() / rows)
}

fn pivot(values: &[f64], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.iter().enumerate() {
        let a = v.abs();
        if allowed(k) && a > PIVOT_FLOOR && best.is_none_or(|(_, m)| a > m) {
            best = Some((k, a));
        }
    }
    best.map(|(k, _)| k)
}

fn divide_row(weight_grad: &[f64], cols: usize, k: usize, by: f64) -> Vec<f64> {
    weight_grad[k * cols..(k + 1) * cols].iter().map(|g| g / by).collect()
}

/// Input of a fully-connected layer from its weight gradient and `∇z`.
///
/// Since `∇W = ∇z·xᵀ`, any row `k` with `∇z_k ≠ 0` gives `x = ∇W[k,:]/∇z_k`;
/// the largest `|∇z_k|` is used (lowest index on ties).
pub fn fc_invert(weight_grad: &[f64], grad_z: &[f64]) -> Result<Vec<f64>> {
    let cols = check_shape(weight_grad, grad_z.len())?;
    let k = pivot(grad_z, |_| true).ok_or_else(|| Error::NonInvertible("every ∇z entry is below the pivot floor".into()))?;
    Ok(divide_row(weight_grad, cols, k, grad_z[k]))
}

/// Bias form of [`fc_invert`]: `x = ∇W[k,:]/∇b_k` for a `k` with `b_k ≠ 0`
/// and `∇b_k ≠ 0`.
pub fn fc_invert_with_bias(weight_grad: &[f64], bias: &[f64], bias_grad: &[f64]) -> Result<Vec<f64>> {
    if bias.len() != bias_grad.len() {
        return Err(Error::dim(0, "bias and bias gradient differ in length"));
    }
    let cols = check_shape(weight_grad, bias_grad.len())?;
    let k = pivot(bias_grad, |k| bias[k] != 0.0)
        .ok_or_else(|| Error::NonInvertible("no row with nonzero bias and nonzero bias gradient".into()))?;
    Ok(divide_row(weight_grad, cols, k, bias_grad[k]))
}

/// Recovers `∇logits = softmax(z) − onehot(label)` for a bias-free final
/// layer from its weight matrix and weight gradient.
///
/// With `∇W = g·xᵀ` both factors are known up to one scalar: `x = t·a` and
/// `g = b/t`. The logits are then `t·(W·a)`, and `t` is the root of
/// `t·(softmax(t·W·a)[label] − 1) = b[label]`. The root with the smallest
/// residual over all classes is returned.
pub fn recover_logit_gradient(weight: &[f64], weight_grad: &[f64], label: usize, num_classes: usize) -> Result<Vec<f64>> {
    let cols = check_shape(weight_grad, num_classes)?;
    if weight.len() != weight_grad.len() {
        return Err(Error::dim(0, "weight and weight gradient differ in length"));
    }
    if label >= num_classes {
        return Err(Error::Usage(format!("label {label} out of range for {num_classes} classes")));
    }
    let k_l = pivot(weight_grad, |_| true).ok_or_else(|| Error::NonInvertible("weight gradient is zero".into()))?;
    let (k, l) = (k_l / cols, k_l % cols);
    let a: Vec<f64> = divide_row(weight_grad, cols, k, weight_grad[k_l]);
    let b: Vec<f64> = (0..num_classes).map(|r| weight_grad[r * cols + l]).collect();
    let c: Vec<f64> = (0..num_classes)
        .map(|r| weight[r * cols..(r + 1) * cols].iter().zip(&a).map(|(w, x)| w * x).sum())
        .collect();

    let grad_at = |t: f64| {
        let z: Vec<f64> = c.iter().map(|v| v * t).collect();
        softmax_cross_entropy(&z, label).1
    };
    let h = |t: f64| t * grad_at(t)[label] - b[label];
    let residual = |t: f64| grad_at(t).iter().zip(&b).map(|(g, bv)| (g - bv / t).powi(2)).sum::<f64>();

    // log-spaced scan of |t| in [1e-6, 1e4] on both sides of zero
    let steps = 4000;
    let grid: Vec<f64> = (0..=steps)
        .map(|s| 10f64.powf(-6.0 + 10.0 * s as f64 / steps as f64))
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for sgn in [1.0, -1.0] {
        for pair in grid.windows(2) {
            let (mut lo, mut hi) = (sgn * pair[0], sgn * pair[1]);
            let (mut hlo, hhi) = (h(lo), h(hi));
            if hlo == 0.0 || hlo.signum() == hhi.signum() {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let hm = h(mid);
                if hm.signum() == hlo.signum() {
                    lo = mid;
                    hlo = hm;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            let r = residual(t);
            if best.is_none_or(|(_, br)| r < br) {
                best = Some((t, r));
            }
        }
    }
    let (t, _) = best.ok_or_else(|| Error::NonInvertible("no consistent logit-gradient scale".into()))?;
    Ok(b.iter().map(|v| v / t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{gradients_for, LayerSpec, NetworkSpec, Shape3, WeightSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, bias: bool) -> (NetworkSpec, WeightSet, Vec<f64>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..40);
        let classes = rng.gen_range(3..12);
        let spec = NetworkSpec::new(
            Shape3::flat(n),
            vec![LayerSpec::fully_connected(n, classes).with_bias(bias)],
            classes,
        )
        .unwrap();
        let w = WeightSet::random(&spec, seed);
        let x: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        (spec, w, x, rng.gen_range(0..classes))
    }

    #[test]
    fn general_and_bias_forms_agree() {
        let (spec, w, x, label) = instance(3, true);
        let (_, g) = gradients_for(&spec, &w, &x, label).unwrap();
        let l = &g.layers[0];
        let general = fc_invert(&l.weight, &l.pre_activation).unwrap();
        let biased = fc_invert_with_bias(&l.weight, w.layers[0].bias.as_ref().unwrap(), l.bias.as_ref().unwrap()).unwrap();
        assert_eq!(general, biased);
        assert!(general.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn zero_gradient_is_not_invertible() {
        assert!(matches!(fc_invert(&[0.0; 12], &[0.0; 3]), Err(Error::NonInvertible(_))));
        assert!(matches!(fc_invert(&[0.0; 10], &[0.0; 3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn pivot_is_largest_lowest_index() {
        assert_eq!(pivot(&[0.1, -0.5, 0.5, 0.2], |_| true), Some(1));
        assert_eq!(pivot(&[1e-13, 0.0], |_| true), None);
    }

    #[test]
    fn logit_gradient_recovered_without_bias() {
        for seed in 0..20 {
            let (spec, w, x, label) = instance(100 + seed, false);
            let (_, g) = gradients_for(&spec, &w, &x, label).unwrap();
            let l = &g.layers[0];
            let got = recover_logit_gradient(&w.layers[0].weight, &l.weight, label, spec.num_classes).unwrap();
            let err = got
                .iter()
                .zip(&l.pre_activation)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-8, "seed {seed}: {err}");
        }
    }
}
