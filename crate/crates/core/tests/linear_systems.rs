mod common;

use common::*;
use gradleak::linsys::{build_layer_system, min_norm_solve, numeric_rank, singular_values, RankTolerance};
use gradleak::net::{circulant_expand, forward, gradients_for, WeightSet};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn orthonormal_columns(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(rows, cols, &symmetric(rng, rows * cols));
    a.qr().q()
}

/// `Q₁·S·Q₂ᵀ` of rank `r` with singular values in `[0.5, 2]`, and its exact
/// pseudo-inverse `Q₂·S⁻¹·Q₁ᵀ`.
fn low_rank_with_pinv(rng: &mut impl Rng, m: usize, n: usize, r: usize) -> (Array2<f64>, DMatrix<f64>) {
    let q1 = orthonormal_columns(rng, m, r);
    let q2 = orthonormal_columns(rng, n, r);
    let s = nalgebra::DVector::from_fn(r, |_, _| rng.gen_range(0.5..2.0));
    let a = &q1 * DMatrix::from_diagonal(&s) * q2.transpose();
    let pinv = &q2 * DMatrix::from_diagonal(&s.map(|v| 1.0 / v)) * q1.transpose();
    (Array2::from_shape_fn((m, n), |(i, j)| a[(i, j)]), pinv)
}

fn low_rank(rng: &mut impl Rng, m: usize, n: usize, r: usize) -> Array2<f64> {
    low_rank_with_pinv(rng, m, n, r).0
}

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice().unwrap())
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..14, 2usize..14).prop_flat_map(|(m, n)| (Just(m), Just(n), 1..=m.min(n), any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solution_matches_pseudo_inverse((m, n, r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, pinv) = low_rank_with_pinv(&mut rng, m, n, r);
        let v = symmetric(&mut rng, m);
        let x = min_norm_solve(u.view(), &v, RankTolerance::default()).unwrap();
        let oracle = pinv * nalgebra::DVector::from_column_slice(&v);
        for (a, b) in x.iter().zip(oracle.iter()) {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_columns((m, n, r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = low_rank(&mut rng, m, n, r);
        let v = symmetric(&mut rng, m);
        let x = min_norm_solve(u.view(), &v, RankTolerance::default()).unwrap();
        let res = &u.dot(&ndarray::Array1::from(x.clone())) - &ndarray::Array1::from(v);
        let normal = u.t().dot(&res);
        let unorm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(normal.iter().all(|g| g.abs() < 1e-9 * unorm.max(1.0) * unorm.max(1.0)));
        // the minimum-norm solution has no null-space component: P·x = x
        // for the row-space projector P = A⁺A
        let (_, pinv) = low_rank_with_pinv(&mut ChaCha8Rng::seed_from_u64(seed), m, n, r);
        let projected = &pinv * to_nalgebra(&u) * nalgebra::DVector::from_column_slice(&x);
        for (a, b) in projected.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_survives_row_permutation_and_scaling((m, n, r, seed) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = low_rank(&mut rng, m, n, r);
        let tol = RankTolerance::default();
        prop_assert_eq!(numeric_rank(u.view(), tol).unwrap(), r);
        let mut order: Vec<usize> = (0..m).collect();
        order.reverse();
        let scaled = Array2::from_shape_fn((m, n), |(i, j)| u[[order[i], j]] * (1.0 + i as f64));
        prop_assert_eq!(numeric_rank(scaled.view(), tol).unwrap(), r);
        let sv = singular_values(u.view()).unwrap();
        let oracle = to_nalgebra(&u).singular_values();
        let mut oracle: Vec<f64> = oracle.iter().copied().collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b) in sv.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9 * oracle[0]);
        }
    }

    #[test]
    fn true_trace_satisfies_every_layer_system(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = small_net(&mut rng);
        let w = WeightSet::random(&spec, rng.gen());
        let x = uniform(&mut rng, spec.input_len());
        let label = rng.gen_range(0..spec.num_classes);
        let (trace, g) = gradients_for(&spec, &w, &x, label).unwrap();
        for i in (0..spec.depth()).filter(|&i| spec.layers[i].is_conv()) {
            let sys = build_layer_system(&spec, i, &w.layers[i], &trace.post_activations[i], &g.layers[i].weight, &g.layers[i].pre_activation).unwrap();
            let r = sys.apply_dense(&trace.inputs[i]);
            let worst = r.iter().zip(&sys.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(worst < 1e-10, "layer {}: {}", i, worst);
        }
    }

    #[test]
    fn circulant_form_reproduces_the_conv(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = small_net(&mut rng);
        let w = WeightSet::random(&spec, rng.gen());
        let x = uniform(&mut rng, spec.input_len());
        let trace = forward(&spec, &w, &x).unwrap();
        let m = circulant_expand(&spec.layers[0], &w.layers[0].weight, spec.input_shape).unwrap();
        let z = m.dot(&ndarray::Array1::from(x));
        for (a, b) in z.iter().zip(&trace.pre_activations[0]) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
