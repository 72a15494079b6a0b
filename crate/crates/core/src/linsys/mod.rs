//! Per-layer linear systems `u·x = v` and their minimum-norm solution.
//!
//! For a conv layer the top block of `u` is the dense convolution matrix and
//! the bottom block maps the layer input to its kernel gradient; `v` stacks
//! the inverted activations of the next layer's input estimate and the
//! observed kernel gradient.

mod lapack;
mod operator;

pub use operator::SystemOperator;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{activation_invert, circulant_expand, grad_circulant_expand, LayerParams, NetworkSpec};

/// Relative cutoff for numeric rank: a singular value counts when
/// `σ > σ_max · max(m, n) · 2⁻⁵² · safety_factor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankTolerance {
    pub safety_factor: f64,
}

impl Default for RankTolerance {
    fn default() -> Self {
        Self { safety_factor: 100.0 }
    }
}

impl RankTolerance {
    /// Cutoff relative to `σ_max` for an `m × n` matrix.
    pub fn relative(&self, m: usize, n: usize) -> f64 {
        m.max(n) as f64 * f64::EPSILON * self.safety_factor
    }

    /// Number of singular values above the cutoff (input sorted descending).
    pub fn rank_of(&self, singular_values: &[f64], m: usize, n: usize) -> usize {
        let Some(&max) = singular_values.first() else { return 0 };
        if max <= 0.0 {
            return 0;
        }
        let cut = max * self.relative(m, n);
        singular_values.iter().take_while(|&&s| s > cut).count()
    }
}

/// Rank and conditioning of a solved system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDiagnostics {
    pub numeric_rank: usize,
    /// `σ_max / σ_min` over singular values above the cutoff.
    pub condition_estimate: f64,
    pub sigma_max: f64,
    pub sigma_min_kept: f64,
}

impl SystemDiagnostics {
    fn from_singular_values(sv: &[f64], m: usize, n: usize, tol: RankTolerance) -> Self {
        let rank = tol.rank_of(sv, m, n);
        let sigma_max = sv.first().copied().unwrap_or(0.0);
        let sigma_min_kept = if rank > 0 { sv[rank - 1] } else { 0.0 };
        Self {
            numeric_rank: rank,
            condition_estimate: if rank > 0 { sigma_max / sigma_min_kept } else { f64::INFINITY },
            sigma_max,
            sigma_min_kept,
        }
    }
}

/// The stacked system for one conv layer.
#[derive(Debug, Clone)]
pub struct LayerSystem {
    pub u: Array2<f64>,
    pub v: Vec<f64>,
    pub layer_index: usize,
    /// Unknowns in the system (the layer input length, plus one when a bias
    /// column was appended).
    pub n_i: usize,
    pub bias_augmented: bool,
    pub operator: SystemOperator,
    pub diagnostics: Option<SystemDiagnostics>,
}

/// Minimum-norm least-squares solution with its diagnostics.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Solution over the layer input (the bias coordinate, if any, removed).
    pub x: Vec<f64>,
    pub diagnostics: SystemDiagnostics,
    pub singular_values: Vec<f64>,
}

impl LayerSystem {
    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    /// Input length of the layer (without any bias coordinate).
    pub fn input_len(&self) -> usize {
        self.operator.cols()
    }

    pub fn numeric_rank(&self) -> Option<usize> {
        self.diagnostics.as_ref().map(|d| d.numeric_rank)
    }

    /// `rank(u) − n_i`; available once the system was analysed or solved.
    pub fn rank_deficiency(&self) -> Option<i64> {
        self.numeric_rank().map(|r| r as i64 - self.n_i as i64)
    }

    /// Computes rank and condition from the singular values of `u`.
    pub fn analyze(&mut self, tol: RankTolerance) -> Result<&SystemDiagnostics> {
        let sv = lapack::singular_values(self.u.view()).map_err(|e| with_layer(e, self.layer_index))?;
        let d = SystemDiagnostics::from_singular_values(&sv, self.u.nrows(), self.u.ncols(), tol);
        Ok(self.diagnostics.insert(d))
    }

    /// Solves `min ‖u·x − v‖` with minimum `‖x‖`, recording diagnostics.
    pub fn solve(&mut self, tol: RankTolerance) -> Result<LeastSquares> {
        let (m, n) = self.u.dim();
        let out = lapack::gelsd(self.u.view(), &self.v, tol.relative(m, n)).map_err(|e| with_layer(e, self.layer_index))?;
        let diagnostics = SystemDiagnostics::from_singular_values(&out.singular_values, m, n, tol);
        self.diagnostics = Some(diagnostics.clone());
        let mut x = out.x;
        x.truncate(self.input_len());
        Ok(LeastSquares {
            x,
            diagnostics,
            singular_values: out.singular_values,
        })
    }

    /// `‖u·x − v‖₂` for an input-length `x`, using the matrix-free operator.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        self.operator.residual(x, &self.v).iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// `u·x` with the dense matrix (a trailing `1` is appended when augmented).
    pub fn apply_dense(&self, x: &[f64]) -> Vec<f64> {
        let mut full = x.to_vec();
        if self.bias_augmented {
            full.push(1.0);
        }
        self.u.dot(&ndarray::ArrayView1::from(&full)).to_vec()
    }
}

fn with_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::Lapack { routine, info, .. } => Error::Lapack {
            routine,
            layer: Some(layer),
            info,
        },
        other => other,
    }
}

/// Builds `(u, v)` for conv layer `layer_index` of `spec`.
///
/// `x_next_estimate` is the (estimated) input of the following layer, whose
/// inverse activation forms the top of `v`; `grad_w` is the observed kernel
/// gradient and `grad_z` the pre-activation gradient at this layer.
pub fn build_layer_system(
    spec: &NetworkSpec,
    layer_index: usize,
    params: &LayerParams,
    x_next_estimate: &[f64],
    grad_w: &[f64],
    grad_z: &[f64],
) -> Result<LayerSystem> {
    let layer = spec
        .layers
        .get(layer_index)
        .ok_or_else(|| Error::Usage(format!("layer {layer_index} does not exist")))?;
    let geometry = spec
        .conv_geometry(layer_index)
        .ok_or_else(|| Error::Usage(format!("layer {layer_index} is not a conv layer")))?;
    let out_len = geometry.output.len();
    let check = |what: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(Error::dim(layer_index, format!("{what} has {got} entries, expected {want}")))
        }
    };
    check("next-layer estimate", x_next_estimate.len(), out_len)?;
    check("pre-activation gradient", grad_z.len(), out_len)?;
    check("kernel gradient", grad_w.len(), geometry.weight_len())?;
    check("kernel", params.weight.len(), geometry.weight_len())?;

    let input_shape = geometry.input;
    let w = circulant_expand(layer, &params.weight, input_shape).map_err(|e| relabel(e, layer_index))?;
    let g = grad_circulant_expand(grad_z, layer, input_shape).map_err(|e| relabel(e, layer_index))?;
    let mut u = concatenate(Axis(0), &[w.view(), g.view()]).expect("same column count");
    let bias = params.bias.clone();
    if let Some(b) = &bias {
        // absorb the bias: u gains a column, x a trailing 1
        let plane = geometry.output.height * geometry.output.width;
        let mut col = Array2::zeros((u.nrows(), 1));
        for (o, &bv) in b.iter().enumerate() {
            col.slice_mut(s![o * plane..(o + 1) * plane, 0]).fill(bv);
        }
        u = concatenate(Axis(1), &[u.view(), col.view()]).expect("same row count");
    }
    let mut v = activation_invert(layer.activation, x_next_estimate)?;
    v.extend_from_slice(grad_w);
    let n_i = u.ncols();
    Ok(LayerSystem {
        u,
        v,
        layer_index,
        n_i,
        bias_augmented: bias.is_some(),
        operator: SystemOperator {
            geometry,
            kernel: params.weight.clone(),
            bias,
            grad_z: grad_z.to_vec(),
        },
        diagnostics: None,
    })
}

fn relabel(e: Error, layer: usize) -> Error {
    match e {
        Error::Dimension { detail, .. } => Error::Dimension { layer, detail },
        other => other,
    }
}

/// Minimum-norm least-squares solution of a layer system.
pub fn min_norm_lstsq(system: &mut LayerSystem, tol: RankTolerance) -> Result<Vec<f64>> {
    if system.u.is_empty() {
        return Err(Error::Usage("empty system".into()));
    }
    Ok(system.solve(tol)?.x)
}

/// Minimum-norm least-squares solution of a general dense system.
pub fn min_norm_solve(u: ArrayView2<'_, f64>, v: &[f64], tol: RankTolerance) -> Result<Vec<f64>> {
    if u.is_empty() {
        return Err(Error::Usage("empty system".into()));
    }
    if v.len() != u.nrows() {
        return Err(Error::dim(
            0,
            format!("rhs has {} entries, matrix has {} rows", v.len(), u.nrows()),
        ));
    }
    let (m, n) = u.dim();
    Ok(lapack::gelsd(u, v, tol.relative(m, n))?.x)
}

pub fn singular_values(u: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    lapack::singular_values(u)
}

/// Count of singular values above the relative cutoff.
pub fn numeric_rank(u: ArrayView2<'_, f64>, tol: RankTolerance) -> Result<usize> {
    let sv = lapack::singular_values(u)?;
    Ok(tol.rank_of(&sv, u.nrows(), u.ncols()))
}

/// `σ_max / σ_min` over the singular values above the cutoff.
pub fn condition_number(u: ArrayView2<'_, f64>, tol: RankTolerance) -> Result<f64> {
    let sv = lapack::singular_values(u)?;
    let d = SystemDiagnostics::from_singular_values(&sv, u.nrows(), u.ncols(), tol);
    if d.numeric_rank == 0 {
        return Err(Error::UndefinedCondition);
    }
    Ok(d.condition_estimate)
}
