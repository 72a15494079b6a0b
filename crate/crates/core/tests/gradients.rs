mod common;

use common::*;
use gradleak::attack::{observed_slice, Distance, MatchObjective, Weights};
use gradleak::linsys::build_layer_system;
use gradleak::net::{backward, cross_entropy_loss, forward, gradients_for, ObservedGradients, WeightSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn backward_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = small_net(&mut rng);
        let w = WeightSet::random(&spec, rng.gen());
        let x = uniform(&mut rng, spec.input_len());
        let label = rng.gen_range(0..spec.num_classes);
        let trace = forward(&spec, &w, &x).unwrap();
        let g = backward(&spec, &w, &trace, label).unwrap();

        let theta = flatten(&w);
        let analytic: Vec<f64> = g.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter().flatten())).copied().collect();
        let dir = symmetric(&mut rng, theta.len());
        let loss_w = |t: &[f64]| {
            let tr = forward(&spec, &unflatten(&w, t), &x).unwrap();
            cross_entropy_loss(tr.logits(), label).unwrap()
        };
        let fd = directional_fd(loss_w, &theta, &dir, 1e-5);
        prop_assert!(rel_err(fd, dot(&analytic, &dir)) < 1e-6, "weights: {} vs {}", fd, dot(&analytic, &dir));

        let dir = symmetric(&mut rng, x.len());
        let loss_x = |v: &[f64]| cross_entropy_loss(forward(&spec, &w, v).unwrap().logits(), label).unwrap();
        let fd = directional_fd(loss_x, &x, &dir, 1e-5);
        prop_assert!(rel_err(fd, dot(&g.layers[0].input, &dir)) < 1e-6);
    }

    #[test]
    fn full_objective_gradient_matches_central_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = small_net(&mut rng);
        let w = WeightSet::random(&spec, rng.gen());
        let x_true = uniform(&mut rng, spec.input_len());
        let label = rng.gen_range(0..spec.num_classes);
        let (trace, g) = gradients_for(&spec, &w, &x_true, label).unwrap();
        let observed = ObservedGradients::from(&g);
        let sys = build_layer_system(&spec, 0, &w.layers[0], &trace.post_activations[0], &g.layers[0].weight, &g.layers[0].pre_activation).unwrap();
        let mu = Weights { matching: rng.gen_range(0.5..2.0), tv: rng.gen_range(0.0..1.0), system: rng.gen_range(0.0..0.2) };
        let obj = MatchObjective::new(&spec, &w, 0, label, observed_slice(&observed, 0), Distance::Cosine, mu)
            .unwrap()
            .with_system(&sys.operator, &sys.v)
            .unwrap();
        let x = uniform(&mut rng, spec.input_len());
        let e = obj.evaluate(&x).unwrap();
        let dir = symmetric(&mut rng, x.len());
        let fd = directional_fd(|v| obj.value(v).unwrap(), &x, &dir, 1e-6);
        prop_assert!(rel_err(fd, dot(&e.grad, &dir)) < 1e-5, "{} vs {}", fd, dot(&e.grad, &dir));
    }
}
