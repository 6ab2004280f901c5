use ndarray::Array2;
use proptest::prelude::*;
use vispinn_core::fidelity::{jet_errors, random_composite, random_network, JET_TOL};
use vispinn_core::holder::{HolderMode, PairGeometry};
use vispinn_core::network::{JetBatch, Order};
use vispinn_core::sampling::{sample_training_set, Domain};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composite_jets_match_central_differences(seed in any::<u64>()) {
        let (expr, x) = random_composite(seed);
        let jet = expr.jet(&x).unwrap();
        let (eg, eh) = jet_errors(&jet, |y| expr.eval(y), &x);
        prop_assert!(eg <= JET_TOL && eh <= JET_TOL, "grad {eg:e} hess {eh:e}");
    }

    #[test]
    fn batched_jets_match_pointwise_jets(seed in any::<u64>(), raw in prop::collection::vec(-2.0..2.0f64, 6)) {
        let params = random_network(seed);
        let d = params.arch().input_dim();
        let n = raw.len() / d;
        let points = Array2::from_shape_fn((n, d), |(i, k)| raw[i * d + k]);
        let batch = JetBatch::forward(&params, &points, Order::Second).unwrap();
        for (i, row) in points.outer_iter().enumerate() {
            let single = params.forward_jet(row.as_slice().unwrap()).unwrap();
            let b = batch.jet(i);
            prop_assert!((single.value - b.value).abs() < 1e-12);
            for (x, y) in single.grad.iter().zip(&b.grad) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for (x, y) in single.hess.packed().iter().zip(b.hess.packed()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn smooth_holder_brackets_the_hard_maximum(
        seed in any::<u64>(),
        values in prop::collection::vec(-3.0..3.0f64, 12),
        tau in 1e-3..1.0f64,
    ) {
        let set = sample_training_set(&Domain::hypercube(1), values.len(), seed).unwrap();
        let geo = PairGeometry::sampled(&set.interior, 0.5, None, seed).unwrap();
        let hard = geo.estimate(&values, HolderMode::Hard).unwrap().value;
        let smooth = geo.estimate(&values, HolderMode::Smooth { temperature: tau }).unwrap().value;
        prop_assert!(smooth >= hard - 1e-12);
        prop_assert!(smooth <= hard + tau * (geo.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn holder_estimate_ignores_shifts_and_scales_quadratically(
        seed in any::<u64>(),
        values in prop::collection::vec(-3.0..3.0f64, 10),
        shift in -5.0..5.0f64,
        scale in 0.1..4.0f64,
    ) {
        let set = sample_training_set(&Domain::hypercube(2), values.len(), seed).unwrap();
        let geo = PairGeometry::sampled(&set.interior, 1.0, None, seed).unwrap();
        let base = geo.estimate(&values, HolderMode::Hard).unwrap().value;
        let moved: Vec<f64> = values.iter().map(|v| scale * v + shift).collect();
        let other = geo.estimate(&moved, HolderMode::Hard).unwrap().value;
        prop_assert!((other - scale * scale * base).abs() <= 1e-9 * other.max(1.0));
    }

    #[test]
    fn training_points_respect_the_domain(seed in any::<u64>(), m_r in 1usize..200, dim in 1usize..=2, ball in any::<bool>()) {
        let domain = if ball { Domain::ball(dim) } else { Domain::hypercube(dim) };
        let set = sample_training_set(&domain, m_r, seed).unwrap();
        prop_assert_eq!(set.m_r(), m_r);
        prop_assert_eq!(set.m_b(), domain.boundary_count(m_r));
        for x in set.interior.outer_iter() {
            prop_assert!(domain.contains_interior(x.as_slice().unwrap()));
        }
        for x in set.boundary.outer_iter() {
            prop_assert!(domain.on_boundary(x.as_slice().unwrap(), 1e-12));
        }
    }
}
