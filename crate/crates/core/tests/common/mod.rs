#![allow(dead_code)]

use gradleak::net::{NetworkSpec, Shape3, WeightSet};
use rand::Rng;

pub fn uniform(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen()).collect()
}

pub fn symmetric(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(x: &[f64], s: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(a, b)| a + s * b).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Central difference of `f` at `x` along `dir`.
pub fn directional_fd(f: impl Fn(&[f64]) -> f64, x: &[f64], dir: &[f64], h: f64) -> f64 {
    (f(&axpy(x, h, dir)) - f(&axpy(x, -h, dir))) / (2.0 * h)
}

pub fn flatten(w: &WeightSet) -> Vec<f64> {
    w.layers
        .iter()
        .flat_map(|l| l.weight.iter().chain(l.bias.iter().flatten()))
        .copied()
        .collect()
}

pub fn unflatten(template: &WeightSet, flat: &[f64]) -> WeightSet {
    let mut w = template.clone();
    let mut k = 0;
    for l in &mut w.layers {
        for v in l.weight.iter_mut().chain(l.bias.iter_mut().flatten()) {
            *v = flat[k];
            k += 1;
        }
    }
    w
}

/// A small random conv stack in the style of the catalog.
pub fn small_net(rng: &mut impl Rng) -> NetworkSpec {
    let channels = rng.gen_range(1..=3);
    let side = rng.gen_range(6..=9);
    let mut b = NetworkSpec::builder(Shape3::new(channels, side, side));
    let mut size = side;
    for _ in 0..rng.gen_range(1..=2) {
        let k = rng.gen_range(2..=3).min(size);
        let s = rng.gen_range(1..=2);
        let p = rng.gen_range(0..=1);
        b = b.conv(k, rng.gen_range(1..=4), s, p);
        size = (size + 2 * p - k) / s + 1;
        if size < 3 {
            break;
        }
    }
    b.fully_connected(rng.gen_range(3..=6)).build().expect("valid small net")
}
