use proptest::prelude::*;
use tcqueue::analytics::{Evaluator, SeriesConfig, SeriesContext};
use tcqueue::montecarlo::{ks_statistic, ks_statistic_bounded};
use tcqueue::queue::{phase_index, phase_inverse, transient_uniformization, QueueParams};
use tcqueue::special::{ml2, ml3, MlArgs};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ml2_is_ml3_with_unit_gamma(a in 0.2f64..1.0, b in 0.5f64..3.0, x in -3.0f64..3.0) {
        let two = ml2(a, b, x, 1e-15).unwrap();
        let three = ml3(MlArgs::new(a, b, 1.0, x).unwrap(), 1e-15).unwrap();
        prop_assert!((two.value - three.value).abs() <= 1e-13 * two.value.abs().max(1.0));
    }

    #[test]
    fn phase_index_round_trips(m in 0usize..10_000, k in 1usize..8) {
        let sp = phase_inverse(m, k);
        prop_assert_eq!(phase_index(sp, k).unwrap(), m);
    }

    #[test]
    fn enclosure_never_lowers_ks(xs in prop::collection::vec(0.0f64..1.0, 1..200), w in 0.0f64..0.05) {
        let exact = ks_statistic(&xs, |t| t, 0.05).unwrap();
        let loose = ks_statistic_bounded(&xs, |t| (t - w, t + w), 0.05).unwrap();
        prop_assert!(loose.d >= exact.d - 1e-15);
        prop_assert!(loose.d - loose.slack <= exact.d + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn identity_change_is_the_base_queue(
        l1 in 0.1f64..1.0,
        l2 in 0.0f64..0.5,
        k in 1usize..4,
        mu in 0.8f64..2.0,
        t in 0.1f64..1.5,
    ) {
        let qp = QueueParams::new(vec![l1, l2], k, mu).unwrap();
        let ctx = SeriesContext::new(qp.clone(), 0.0, 1.0, SeriesConfig::default()).unwrap();
        let snap = Evaluator::new(&ctx, t).unwrap().snapshot(t).unwrap();
        let tab = transient_uniformization(&qp, t, 300, 1e-13).unwrap();
        for j in 0..40 {
            let d = (snap.queue_length_prob(j).value - tab.get(0, j).unwrap().0).abs();
            prop_assert!(d < 1e-9, "j={} d={}", j, d);
        }
    }

    #[test]
    fn tempered_series_normalize(theta in 0.0f64..1.0, alpha in 0.4f64..0.95, t in 0.1f64..1.5) {
        let qp = QueueParams::new(vec![0.6, 0.3], 2, 1.2).unwrap();
        let ctx = SeriesContext::new(qp, theta, alpha, SeriesConfig::default()).unwrap();
        let snap = Evaluator::new(&ctx, t).unwrap().snapshot(t).unwrap();
        prop_assert!((snap.total_probability() - 1.0).abs() <= snap.budget);
        prop_assert!(snap.probs.iter().all(|p| p.value > -p.error));
    }
}
