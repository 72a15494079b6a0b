//! Direct-loop kernels and generic forward/backward passes.
//!
//! Everything here is generic over [`Scalar`] so the same code serves the
//! plain pass and the dual-number pass used for gradient-of-gradient terms.

use super::scalar::Scalar;
use super::spec::{Activation, ConvGeometry, LayerKind, NetworkSpec};

/// Borrowed parameters of one layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ParamsRef<'a, T> {
    pub weight: &'a [T],
    pub bias: Option<&'a [T]>,
}

/// Iterates the `(output offset, input offset, count, input step)` runs a
/// conv kernel tap `(c, a, b)` touches for output channel `o`.
#[inline]
fn for_each_run(g: &ConvGeometry, o: usize, c: usize, a: usize, b: usize, mut f: impl FnMut(usize, usize, usize)) {
    let (ih, iw) = (g.input.height, g.input.width);
    let (oh, ow) = (g.output.height, g.output.width);
    let (r0, r1) = g.valid_range(a, ih, oh);
    let (c0, c1) = g.valid_range(b, iw, ow);
    if c0 >= c1 {
        return;
    }
    for r in r0..r1 {
        let iy = r * g.stride + a - g.padding;
        let out_off = (o * oh + r) * ow + c0;
        let in_off = (c * ih + iy) * iw + c0 * g.stride + b - g.padding;
        f(out_off, in_off, c1 - c0);
    }
}

/// `out = conv(x)` without bias.
pub(crate) fn conv_forward<T: Scalar>(g: &ConvGeometry, w: &[T], x: &[T], out: &mut [T]) {
    debug_assert_eq!(x.len(), g.input.len());
    debug_assert_eq!(out.len(), g.output.len());
    out.fill(T::zero());
    let s = g.stride;
    for o in 0..g.output.channels {
        for c in 0..g.input.channels {
            for a in 0..g.kernel {
                for b in 0..g.kernel {
                    let wv = w[g.weight_index(o, c, a, b)];
                    for_each_run(g, o, c, a, b, |oo, io, n| {
                        let dst = &mut out[oo..oo + n];
                        if s == 1 {
                            for (d, &xv) in dst.iter_mut().zip(&x[io..io + n]) {
                                *d += wv * xv;
                            }
                        } else {
                            for (d, &xv) in dst.iter_mut().zip(x[io..].iter().step_by(s)) {
                                *d += wv * xv;
                            }
                        }
                    });
                }
            }
        }
    }
}

/// `gw[o,c,a,b] = Σ_p gz[o,p]·x[c, p·s + (a,b) − pad]`.
pub(crate) fn conv_weight_grad<T: Scalar>(g: &ConvGeometry, gz: &[T], x: &[T], gw: &mut [T]) {
    debug_assert_eq!(gz.len(), g.output.len());
    debug_assert_eq!(gw.len(), g.weight_len());
    let s = g.stride;
    for o in 0..g.output.channels {
        for c in 0..g.input.channels {
            for a in 0..g.kernel {
                for b in 0..g.kernel {
                    let mut acc = T::zero();
                    for_each_run(g, o, c, a, b, |oo, io, n| {
                        let src = &gz[oo..oo + n];
                        if s == 1 {
                            for (&gv, &xv) in src.iter().zip(&x[io..io + n]) {
                                acc += gv * xv;
                            }
                        } else {
                            for (&gv, &xv) in src.iter().zip(x[io..].iter().step_by(s)) {
                                acc += gv * xv;
                            }
                        }
                    });
                    gw[g.weight_index(o, c, a, b)] = acc;
                }
            }
        }
    }
}

/// `gx = Wᵀ gz`, the transpose of [`conv_forward`].
pub(crate) fn conv_input_grad<T: Scalar>(g: &ConvGeometry, w: &[T], gz: &[T], gx: &mut [T]) {
    debug_assert_eq!(gz.len(), g.output.len());
    debug_assert_eq!(gx.len(), g.input.len());
    gx.fill(T::zero());
    let s = g.stride;
    for o in 0..g.output.channels {
        for c in 0..g.input.channels {
            for a in 0..g.kernel {
                for b in 0..g.kernel {
                    let wv = w[g.weight_index(o, c, a, b)];
                    for_each_run(g, o, c, a, b, |oo, io, n| {
                        let src = &gz[oo..oo + n];
                        if s == 1 {
                            for (d, &gv) in gx[io..io + n].iter_mut().zip(src) {
                                *d += wv * gv;
                            }
                        } else {
                            for (d, &gv) in gx[io..].iter_mut().step_by(s).zip(src) {
                                *d += wv * gv;
                            }
                        }
                    });
                }
            }
        }
    }
}

pub(crate) fn fc_forward<T: Scalar>(w: &[T], x: &[T], out: &mut [T]) {
    let n_in = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n_in..(j + 1) * n_in];
        let mut acc = T::zero();
        for (&wv, &xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
}

pub(crate) fn fc_weight_grad<T: Scalar>(gz: &[T], x: &[T], gw: &mut [T]) {
    let n_in = x.len();
    for (j, &g) in gz.iter().enumerate() {
        for (d, &xv) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(x) {
            *d = g * xv;
        }
    }
}

pub(crate) fn fc_input_grad<T: Scalar>(w: &[T], gz: &[T], gx: &mut [T]) {
    let n_in = gx.len();
    gx.fill(T::zero());
    for (j, &g) in gz.iter().enumerate() {
        for (d, &wv) in gx.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
            *d += wv * g;
        }
    }
}

#[inline]
pub(crate) fn activate<T: Scalar>(kind: Activation, z: T) -> T {
    match kind {
        Activation::Tanh => z.tanh(),
        Activation::Identity => z,
    }
}

/// Activation derivative expressed through the post-activation value.
#[inline]
pub(crate) fn activation_slope<T: Scalar>(kind: Activation, post: T) -> T {
    match kind {
        Activation::Tanh => T::one() - post * post,
        Activation::Identity => T::one(),
    }
}

/// Per-layer values of a pass starting at some layer.
#[derive(Debug, Clone)]
pub(crate) struct Pass<T> {
    pub start: usize,
    pub inputs: Vec<Vec<T>>,
    pub pre: Vec<Vec<T>>,
    pub post: Vec<Vec<T>>,
}

impl<T: Scalar> Pass<T> {
    pub fn logits(&self) -> &[T] {
        self.post.last().expect("at least one layer")
    }
}

/// Applies one layer's affine map.
pub(crate) fn layer_affine<T: Scalar>(spec: &NetworkSpec, i: usize, p: ParamsRef<'_, T>, x: &[T], z: &mut [T]) {
    let layer = &spec.layers[i];
    match layer.kind {
        LayerKind::Conv => {
            let g = spec.conv_geometry(i).expect("conv");
            conv_forward(&g, p.weight, x, z);
            if let Some(bias) = p.bias {
                let plane = g.output.height * g.output.width;
                for (o, &bv) in bias.iter().enumerate() {
                    for v in &mut z[o * plane..(o + 1) * plane] {
                        *v += bv;
                    }
                }
            }
        }
        LayerKind::FullyConnected => {
            fc_forward(p.weight, x, z);
            if let Some(bias) = p.bias {
                for (v, &bv) in z.iter_mut().zip(bias) {
                    *v += bv;
                }
            }
        }
    }
}

/// Runs layers `start..` on `x`. `params[k]` belongs to layer `start + k`.
pub(crate) fn forward_from<T: Scalar>(spec: &NetworkSpec, start: usize, params: &[ParamsRef<'_, T>], x: Vec<T>) -> Pass<T> {
    let depth = spec.depth();
    let mut pass = Pass {
        start,
        inputs: Vec::with_capacity(depth - start),
        pre: Vec::with_capacity(depth - start),
        post: Vec::with_capacity(depth - start),
    };
    let mut current = x;
    for i in start..depth {
        let out_len = spec.output_shape_of(i).len();
        let mut z = vec![T::zero(); out_len];
        layer_affine(spec, i, params[i - start], &current, &mut z);
        let act = spec.layers[i].activation;
        let post: Vec<T> = z.iter().map(|&v| activate(act, v)).collect();
        pass.inputs.push(current);
        pass.pre.push(z);
        current = post.clone();
        pass.post.push(post);
    }
    pass
}

/// Which gradients a backward pass must materialise.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BackwardNeeds {
    pub weights: bool,
    /// Gradient w.r.t. the input of the first layer of the pass.
    pub first_input: bool,
}

impl BackwardNeeds {
    pub const ALL: Self = Self {
        weights: true,
        first_input: true,
    };
}

#[derive(Debug, Clone)]
pub(crate) struct Grads<T> {
    pub weight: Vec<Vec<T>>,
    pub bias: Vec<Option<Vec<T>>>,
    pub pre: Vec<Vec<T>>,
    pub input: Vec<Vec<T>>,
}

/// Softmax cross-entropy and its gradient w.r.t. the logits.
pub(crate) fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> (T, Vec<T>) {
    let m = logits.iter().map(|v| v.re()).fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<T> = logits.iter().map(|&v| v - T::from_f64(m)).collect();
    let exps: Vec<T> = shifted.iter().map(|&v| v.exp()).collect();
    let mut total = T::zero();
    for &e in &exps {
        total += e;
    }
    let loss = total.ln() - shifted[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(j, &e)| {
            let p = e / total;
            if j == label {
                p - T::one()
            } else {
                p
            }
        })
        .collect();
    (loss, grad)
}

/// Backpropagates the loss of `pass` for `label`.
///
/// Input gradients are produced for every layer of the pass except possibly
/// the first (see [`BackwardNeeds`]); absent entries are empty vectors.
pub(crate) fn backward_from<T: Scalar>(
    spec: &NetworkSpec,
    params: &[ParamsRef<'_, T>],
    pass: &Pass<T>,
    label: usize,
    needs: BackwardNeeds,
) -> (T, Grads<T>) {
    let start = pass.start;
    let count = spec.depth() - start;
    let (loss, mut upstream) = softmax_cross_entropy(pass.logits(), label);
    let mut grads = Grads {
        weight: vec![Vec::new(); count],
        bias: vec![None; count],
        pre: vec![Vec::new(); count],
        input: vec![Vec::new(); count],
    };
    for k in (0..count).rev() {
        let i = start + k;
        let layer = &spec.layers[i];
        let p = params[k];
        // ∇z = ∇x⁽ⁱ⁺¹⁾ ⊙ α'(z)
        let gz: Vec<T> = upstream
            .iter()
            .zip(&pass.post[k])
            .map(|(&g, &y)| g * activation_slope(layer.activation, y))
            .collect();
        let x = &pass.inputs[k];
        if needs.weights {
            let mut gw = vec![T::zero(); layer.weight_len()];
            match layer.kind {
                LayerKind::Conv => conv_weight_grad(&spec.conv_geometry(i).expect("conv"), &gz, x, &mut gw),
                LayerKind::FullyConnected => fc_weight_grad(&gz, x, &mut gw),
            }
            grads.weight[k] = gw;
            if p.bias.is_some() {
                grads.bias[k] = Some(match layer.kind {
                    LayerKind::Conv => {
                        let plane = spec.output_shape_of(i).height * spec.output_shape_of(i).width;
                        gz.chunks(plane)
                            .map(|ch| {
                                let mut acc = T::zero();
                                for &v in ch {
                                    acc += v;
                                }
                                acc
                            })
                            .collect()
                    }
                    LayerKind::FullyConnected => gz.clone(),
                });
            }
        }
        if k > 0 || needs.first_input {
            let mut gx = vec![T::zero(); x.len()];
            match layer.kind {
                LayerKind::Conv => conv_input_grad(&spec.conv_geometry(i).expect("conv"), p.weight, &gz, &mut gx),
                LayerKind::FullyConnected => fc_input_grad(p.weight, &gz, &mut gx),
            }
            upstream = gx.clone();
            grads.input[k] = gx;
        }
        grads.pre[k] = gz;
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::spec::Shape3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook sliding-window convolution with explicit padding checks.
    fn naive_conv(g: &ConvGeometry, w: &[f64], x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.output.len()];
        for o in 0..g.output.channels {
            for r in 0..g.output.height {
                for col in 0..g.output.width {
                    let mut acc = 0.0;
                    for c in 0..g.input.channels {
                        for a in 0..g.kernel {
                            for b in 0..g.kernel {
                                let iy = (r * g.stride + a) as isize - g.padding as isize;
                                let ix = (col * g.stride + b) as isize - g.padding as isize;
                                if iy < 0 || ix < 0 || iy >= g.input.height as isize || ix >= g.input.width as isize {
                                    continue;
                                }
                                acc += w[g.weight_index(o, c, a, b)] * x[g.input.index(c, iy as usize, ix as usize)];
                            }
                        }
                    }
                    out[g.output.index(o, r, col)] = acc;
                }
            }
        }
        out
    }

    fn geometries() -> Vec<ConvGeometry> {
        [
            (2, 7, 7, 3, 3, 1, 0),
            (3, 8, 8, 2, 4, 2, 0),
            (2, 6, 6, 3, 5, 1, 2),
            (1, 9, 9, 2, 3, 2, 1),
            (2, 10, 10, 2, 5, 2, 0),
            (1, 8, 8, 2, 3, 2, 1),
        ]
        .iter()
        .map(|&(ic, h, w, oc, k, s, p)| {
            let oh = (h + 2 * p - k) / s + 1;
            let ow = (w + 2 * p - k) / s + 1;
            ConvGeometry {
                input: Shape3::new(ic, h, w),
                output: Shape3::new(oc, oh, ow),
                kernel: k,
                stride: s,
                padding: p,
            }
        })
        .collect()
    }

    #[test]
    fn conv_kernels_match_naive_and_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in geometries() {
            let w: Vec<f64> = (0..g.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..g.input.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gz: Vec<f64> = (0..g.output.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut out = vec![0.0; g.output.len()];
            conv_forward(&g, &w, &x, &mut out);
            let expected = naive_conv(&g, &w, &x);
            for (a, b) in out.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
            // <gz, conv(x)> = <Wᵀgz, x> = <gw(gz, x), w>
            let lhs: f64 = gz.iter().zip(&out).map(|(a, b)| a * b).sum();
            let mut gx = vec![0.0; g.input.len()];
            conv_input_grad(&g, &w, &gz, &mut gx);
            let mid: f64 = gx.iter().zip(&x).map(|(a, b)| a * b).sum();
            let mut gw = vec![0.0; g.weight_len()];
            conv_weight_grad(&g, &gz, &x, &mut gw);
            let rhs: f64 = gw.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((lhs - mid).abs() < 1e-10 && (lhs - rhs).abs() < 1e-10, "{g:?}");
        }
    }

    #[test]
    fn softmax_cross_entropy_gradient_sums_to_zero() {
        let (loss, grad) = softmax_cross_entropy(&[1.0, 2.0, 3.0], 2);
        assert!((loss - 0.407_605_964_444_380_1).abs() < 1e-12);
        assert!(grad.iter().sum::<f64>().abs() < 1e-15);
        assert!(grad[2] < 0.0 && grad[0] > 0.0);
    }
}
