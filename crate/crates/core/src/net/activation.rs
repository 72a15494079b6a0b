use super::spec::Activation;
use crate::error::{Error, Result};

/// Inputs to `atanh` are clamped to `[-1 + ε, 1 − ε]` with this ε.
pub const TANH_CLAMP: f64 = 1e-6;

pub fn activation_apply(kind: Activation, z: &[f64]) -> Result<Vec<f64>> {
    check_finite(z)?;
    Ok(match kind {
        Activation::Tanh => z.iter().map(|v| v.tanh()).collect(),
        Activation::Identity => z.to_vec(),
    })
}

/// Pre-activation values that produce `x`.
///
/// For tanh the values are clamped first so that estimates pushed onto or
/// past ±1 by upstream reconstruction error stay finite.
pub fn activation_invert(kind: Activation, x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x)?;
    Ok(match kind {
        Activation::Tanh => x.iter().map(|&v| clamp_tanh(v).atanh()).collect(),
        Activation::Identity => x.to_vec(),
    })
}

#[inline]
pub(crate) fn clamp_tanh(v: f64) -> f64 {
    v.clamp(-1.0 + TANH_CLAMP, 1.0 - TANH_CLAMP)
}

fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("non-finite activation input at index {i}"))),
        None => Ok(()),
    }
}
