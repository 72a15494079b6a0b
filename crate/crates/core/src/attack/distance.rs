use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Shape3;

/// `1 − ⟨a, b⟩ / (‖a‖·‖b‖)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(0, format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let (dot, na, nb) = dot_norms(a, b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedDistance);
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

fn dot_norms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    (dot, aa.sqrt(), bb.sqrt())
}

/// Cosine distance and its gradient with respect to `a`.
pub(crate) fn cosine_distance_grad(a: &[f64], b: &[f64]) -> Option<(f64, Vec<f64>)> {
    let (dot, na, nb) = dot_norms(a, b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let inv = 1.0 / (na * nb);
    let c = dot * inv;
    let grad = a.iter().zip(b).map(|(&x, &y)| -y * inv + c * x / (na * na)).collect();
    Some((1.0 - c, grad))
}

/// How total variation is normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvNorm {
    /// Plain sum of absolute forward differences.
    Sum,
    /// Each direction's sum divided by its number of differences.
    #[default]
    Mean,
}

/// Anisotropic total variation of a `(C, H, W)` image:
/// `Σ |x[c,i+1,j] − x[c,i,j]| + Σ |x[c,i,j+1] − x[c,i,j]|`.
pub fn total_variation(image: &[f64], shape: Shape3) -> Result<f64> {
    check_image(image, shape)?;
    Ok(tv_value_grad(image, shape, TvNorm::Sum, false).0)
}

/// Total variation and a subgradient, using `sign(0) = 0`.
pub fn total_variation_grad(image: &[f64], shape: Shape3, norm: TvNorm) -> Result<(f64, Vec<f64>)> {
    check_image(image, shape)?;
    Ok(tv_value_grad(image, shape, norm, true))
}

fn check_image(image: &[f64], shape: Shape3) -> Result<()> {
    if image.len() != shape.len() {
        return Err(Error::dim(
            0,
            format!("image has {} values, shape {shape} needs {}", image.len(), shape.len()),
        ));
    }
    Ok(())
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn tv_value_grad(x: &[f64], shape: Shape3, norm: TvNorm, want_grad: bool) -> (f64, Vec<f64>) {
    let (c, h, w) = (shape.channels, shape.height, shape.width);
    let (wv, wh) = match norm {
        TvNorm::Sum => (1.0, 1.0),
        TvNorm::Mean => {
            let vert = c * h.saturating_sub(1) * w;
            let horiz = c * h * w.saturating_sub(1);
            (1.0 / vert.max(1) as f64, 1.0 / horiz.max(1) as f64)
        }
    };
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; x.len()] } else { Vec::new() };
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..h {
            for j in 0..w {
                let p = base + i * w + j;
                if i + 1 < h {
                    let d = x[p + w] - x[p];
                    total += wv * d.abs();
                    if want_grad {
                        let s = wv * sign(d);
                        grad[p + w] += s;
                        grad[p] -= s;
                    }
                }
                if j + 1 < w {
                    let d = x[p + 1] - x[p];
                    total += wh * d.abs();
                    if want_grad {
                        let s = wh * sign(d);
                        grad[p + 1] += s;
                        grad[p] -= s;
                    }
                }
            }
        }
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        let a = [1.0, 2.0, -0.5];
        assert!(cosine_distance(&a, &a).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((cosine_distance(&a, &neg).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(
            cosine_distance(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::UndefinedDistance)
        ));
    }

    #[test]
    fn cosine_gradient_matches_differences() {
        let a = [0.3, -1.1, 0.7, 2.0];
        let b = [1.0, 0.5, -0.2, 0.9];
        let (_, g) = cosine_distance_grad(&a, &b).unwrap();
        for k in 0..4 {
            let mut p = a;
            let mut m = a;
            p[k] += 1e-6;
            m[k] -= 1e-6;
            let fd = (cosine_distance(&p, &b).unwrap() - cosine_distance(&m, &b).unwrap()) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn tv_values() {
        let s = Shape3::new(1, 2, 2);
        assert_eq!(total_variation(&[0.4; 4], s).unwrap(), 0.0);
        assert_eq!(total_variation(&[0.0, 1.0, 0.0, 1.0], s).unwrap(), 2.0);
        // vertical step of height h between columns 1 and 2 of a 5-row image
        let h = 0.75;
        let img: Vec<f64> = (0..20).map(|p| if p % 4 >= 2 { h } else { 0.0 }).collect();
        assert!((total_variation(&img, Shape3::new(1, 5, 4)).unwrap() - h * 5.0).abs() < 1e-15);
    }

    #[test]
    fn tv_gradient_of_constant_is_zero() {
        let (_, g) = total_variation_grad(&[0.2; 18], Shape3::new(2, 3, 3), TvNorm::Sum).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn mean_norm_scales_each_direction() {
        let s = Shape3::new(1, 2, 3);
        let img = [0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let (sum, _) = total_variation_grad(&img, s, TvNorm::Sum).unwrap();
        let (mean, _) = total_variation_grad(&img, s, TvNorm::Mean).unwrap();
        // vertical diffs: 1, 0, 1 over 3; horizontal: 1, 1, 0, 0 over 4
        assert_eq!(sum, 4.0);
        assert!((mean - (2.0 / 3.0 + 2.0 / 4.0)).abs() < 1e-15);
    }
}
