use crate::net::engine::{conv_forward, conv_input_grad, conv_weight_grad};
use crate::net::ConvGeometry;

/// Matrix-free form of a conv layer's stacked system `u = [W; G]`.
///
/// `W` is the convolution and `G` the kernel-gradient map for a fixed `∇z`.
/// A bias, when present, enters as a constant shift of the top block, which
/// matches the dense system's bias column multiplied by a fixed `1`.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub geometry: ConvGeometry,
    pub kernel: Vec<f64>,
    pub bias: Option<Vec<f64>>,
    pub grad_z: Vec<f64>,
}

impl SystemOperator {
    pub fn rows(&self) -> usize {
        self.geometry.output.len() + self.geometry.weight_len()
    }

    pub fn cols(&self) -> usize {
        self.geometry.input.len()
    }

    /// `u·x` (plus the bias shift on the top block).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.geometry;
        let out_len = g.output.len();
        let mut y = vec![0.0; self.rows()];
        let (top, bottom) = y.split_at_mut(out_len);
        conv_forward(g, &self.kernel, x, top);
        if let Some(bias) = &self.bias {
            let plane = g.output.height * g.output.width;
            for (o, &b) in bias.iter().enumerate() {
                for v in &mut top[o * plane..(o + 1) * plane] {
                    *v += b;
                }
            }
        }
        conv_weight_grad(g, &self.grad_z, x, bottom);
        y
    }

    /// `uᵀ·r` restricted to the image columns.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        let g = &self.geometry;
        let (top, bottom) = r.split_at(g.output.len());
        let mut out = vec![0.0; g.input.len()];
        conv_input_grad(g, &self.kernel, top, &mut out);
        // Gᵀ·r is the input gradient of a conv whose "kernel" is r and whose
        // output gradient is ∇z.
        let mut extra = vec![0.0; g.input.len()];
        conv_input_grad(g, bottom, &self.grad_z, &mut extra);
        for (o, e) in out.iter_mut().zip(extra) {
            *o += e;
        }
        out
    }

    /// `u·x − v`.
    pub fn residual(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut r = self.apply(x);
        for (ri, vi) in r.iter_mut().zip(v) {
            *ri -= vi;
        }
        r
    }
}
