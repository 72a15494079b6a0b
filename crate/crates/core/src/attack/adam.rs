use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_step(step: f64) -> Self {
        Self { step, ..Self::default() }
    }
}

/// Moment estimates for stepping a parameter vector by hand.
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    m: Vec<f64>,
    s: Vec<f64>,
    b1t: f64,
    b2t: f64,
}

impl AdamState {
    pub fn new(len: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![0.0; len],
            s: vec![0.0; len],
            b1t: 1.0,
            b2t: 1.0,
        }
    }

    /// One bias-corrected update of `x` along `grad`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        let cfg = self.cfg;
        self.b1t *= cfg.beta1;
        self.b2t *= cfg.beta2;
        let c1 = 1.0 / (1.0 - self.b1t);
        let c2 = 1.0 / (1.0 - self.b2t);
        for i in 0..x.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.s[i] = cfg.beta2 * self.s[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            x[i] -= cfg.step * (self.m[i] * c1) / ((self.s[i] * c2).sqrt() + cfg.eps);
        }
    }
}

/// Result of [`adam_minimize`].
#[derive(Debug, Clone)]
pub struct AdamOutcome {
    /// The iterate with the lowest recorded objective.
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    /// Update count after which `x` was recorded (0 means `x0`).
    pub best_iteration: usize,
    /// Updates actually performed.
    pub iterations: usize,
    /// True when the run stopped early on a non-finite objective.
    pub diverged: bool,
}

/// Minimises with Adam, evaluating before every update and once after the
/// last, and returns the best iterate seen.
///
/// `f` returns the objective and its gradient. A non-finite value at `x0` is
/// an error; a non-finite value later stops the run.
pub fn adam_minimize<F>(mut f: F, x0: &[f64], iterations: usize, cfg: AdamConfig) -> Result<AdamOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0.to_vec();
    let (v0, mut g) = f(&x)?;
    if !v0.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Initialization);
    }
    let mut best = (v0, x.clone(), 0);
    let mut state = AdamState::new(x.len(), cfg);
    let mut done = 0;
    let mut diverged = false;
    for t in 1..=iterations {
        state.step(&mut x, &g);
        done = t;
        let (v, grad) = f(&x)?;
        if !v.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            diverged = true;
            break;
        }
        if v < best.0 {
            best = (v, x.clone(), t);
        }
        g = grad;
    }
    Ok(AdamOutcome {
        x: best.1,
        value: best.0,
        initial_value: v0,
        best_iteration: best.2,
        iterations: done,
        diverged,
    })
}
