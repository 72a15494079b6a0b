//! Dense matrix forms of a conv layer's weight and gradient constraints.
//!
//! Both matrices act on the channel-major flattened layer input. The weight
//! matrix `W` maps `x` to the flattened conv output; the gradient matrix `G`
//! maps `x` to the flattened kernel gradient for a fixed `∇z`.

use ndarray::Array2;

use super::spec::{ConvGeometry, LayerSpec, Shape3};
use crate::error::{Error, Result};

fn geometry(layer: &LayerSpec, input_shape: Shape3) -> Result<ConvGeometry> {
    if !layer.is_conv() {
        return Err(Error::Usage("circulant expansion needs a conv layer".into()));
    }
    let output = layer.output_shape(input_shape, 0)?;
    Ok(ConvGeometry {
        input: input_shape,
        output,
        kernel: layer.kernel,
        stride: layer.stride,
        padding: layer.padding,
    })
}

/// Visits every (output position, kernel entry, input position) incidence.
fn for_each_incidence(g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize, usize)) {
    for o in 0..g.output.channels {
        for c in 0..g.input.channels {
            for a in 0..g.kernel {
                let (r0, r1) = g.valid_range(a, g.input.height, g.output.height);
                for b in 0..g.kernel {
                    let (c0, c1) = g.valid_range(b, g.input.width, g.output.width);
                    let wi = g.weight_index(o, c, a, b);
                    for r in r0..r1 {
                        let iy = r * g.stride + a - g.padding;
                        for col in c0..c1 {
                            let ix = col * g.stride + b - g.padding;
                            f(o, g.output.index(o, r, col), wi, g.input.index(c, iy, ix));
                        }
                    }
                }
            }
        }
    }
}

/// Matrix `W` with `W·flatten(x) = flatten(conv(x))`, shape `(out_len, n_in)`.
pub fn circulant_expand(layer: &LayerSpec, kernel: &[f64], input_shape: Shape3) -> Result<Array2<f64>> {
    let g = geometry(layer, input_shape)?;
    if kernel.len() != g.weight_len() {
        return Err(Error::dim(
            0,
            format!("kernel has {} entries, layer needs {}", kernel.len(), g.weight_len()),
        ));
    }
    let mut w = Array2::zeros((g.output.len(), g.input.len()));
    for_each_incidence(&g, |_, row, wi, col| w[[row, col]] = kernel[wi]);
    Ok(w)
}

/// Matrix `G` with `G·flatten(x) = flatten(∇_w L)` for the given `∇z`,
/// shape `(|w|, n_in)`.
pub fn grad_circulant_expand(grad_z: &[f64], layer: &LayerSpec, input_shape: Shape3) -> Result<Array2<f64>> {
    let g = geometry(layer, input_shape)?;
    if grad_z.len() != g.output.len() {
        return Err(Error::dim(
            0,
            format!("gradient has {} entries, conv output has {}", grad_z.len(), g.output.len()),
        ));
    }
    let mut m = Array2::zeros((g.weight_len(), g.input.len()));
    for_each_incidence(&g, |_, out, wi, col| m[[wi, col]] += grad_z[out]);
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::engine::{conv_forward, conv_weight_grad};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pointwise_kernel_is_scaled_identity() {
        let layer = LayerSpec::conv(1, 1, 1, 1, 0);
        let w = circulant_expand(&layer, &[2.5], Shape3::new(1, 3, 3)).unwrap();
        assert_eq!(w, Array2::<f64>::eye(9) * 2.5);
    }

    #[test]
    fn sliding_window_agreement() {
        let layer = LayerSpec::conv(1, 1, 3, 1, 0);
        let shape = Shape3::new(1, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let kernel: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = circulant_expand(&layer, &kernel, shape).unwrap();
        assert_eq!(w.dim(), (4, 16));
        for _ in 0..100 {
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dense = w.dot(&ndarray::ArrayView1::from(&x));
            // direct sliding window
            for r in 0..2 {
                for c in 0..2 {
                    let mut acc = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            acc += kernel[a * 3 + b] * x[(r + a) * 4 + c + b];
                        }
                    }
                    assert!((dense[r * 2 + c] - acc).abs() < 1e-12);
                }
            }
        }
        // each row holds exactly the kernel entries
        for row in w.rows() {
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 9);
        }
    }

    #[test]
    fn gradient_matrix_reproduces_weight_gradient() {
        let layer = LayerSpec::conv(2, 3, 3, 2, 1);
        let shape = Shape3::new(2, 7, 7);
        let g = geometry(&layer, shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gz: Vec<f64> = (0..g.output.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..g.input.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m = grad_circulant_expand(&gz, &layer, shape).unwrap();
        let dense = m.dot(&ndarray::ArrayView1::from(&x));
        let mut gw = vec![0.0; g.weight_len()];
        conv_weight_grad(&g, &gz, &x, &mut gw);
        for (a, b) in dense.iter().zip(&gw) {
            assert!((a - b).abs() < 1e-12);
        }
        let kernel: Vec<f64> = (0..g.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = circulant_expand(&layer, &kernel, shape).unwrap();
        let mut out = vec![0.0; g.output.len()];
        conv_forward(&g, &kernel, &x, &mut out);
        for (a, b) in w.dot(&ndarray::ArrayView1::from(&x)).iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gradient_gives_zero_matrix() {
        let layer = LayerSpec::conv(1, 2, 3, 1, 0);
        let m = grad_circulant_expand(&[0.0; 8], &layer, Shape3::new(1, 4, 4)).unwrap();
        assert!(m.iter().all(|v| *v == 0.0));
        assert_eq!(m.dim(), (18, 16));
    }

    #[test]
    fn errors() {
        let fc = LayerSpec::fully_connected(4, 2);
        assert!(matches!(
            circulant_expand(&fc, &[0.0; 8], Shape3::flat(4)),
            Err(Error::Usage(_))
        ));
        let layer = LayerSpec::conv(1, 1, 3, 1, 0);
        assert!(matches!(
            grad_circulant_expand(&[0.0; 3], &layer, Shape3::new(1, 4, 4)),
            Err(Error::Dimension { .. })
        ));
    }
}
