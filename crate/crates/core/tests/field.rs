use conefrac::{dilate, lp_norm, make_test_field, FieldKind, FieldParams, GridSpec, SampledField};
use proptest::prelude::*;

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn norm_is_homogeneous(v in values(64), c in 0.01f64..100.0, p in 1.0f64..6.0) {
        let spec = GridSpec::new(1, 1.0, 1.0, 8).unwrap();
        let f = SampledField::new(spec, v).unwrap();
        let a = lp_norm(&f.scaled(c), p);
        let b = c * lp_norm(&f, p);
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
    }

    #[test]
    fn norm_is_monotone(v in values(64), w in values(64), p in 1.0f64..6.0) {
        let spec = GridSpec::new(1, 1.0, 1.0, 8).unwrap();
        let f = SampledField::new(spec, v.clone()).unwrap();
        let g = SampledField::new(spec, v.iter().zip(&w).map(|(a, b)| a + b).collect()).unwrap();
        prop_assert!(lp_norm(&f, p) <= lp_norm(&g, p) * (1.0 + 1e-14));
    }

    #[test]
    fn negative_or_non_finite_values_are_rejected(i in 0usize..64, bad in prop::sample::select(vec![-1.0, f64::NAN, f64::INFINITY])) {
        let spec = GridSpec::new(1, 1.0, 1.0, 8).unwrap();
        let mut v = vec![1.0; 64];
        v[i] = bad;
        prop_assert!(SampledField::new(spec, v).is_err());
    }
}

#[test]
fn example_norms() {
    let f = SampledField::from_fn(GridSpec::new(1, 1.0, 1.0, 20).unwrap(), |_| 1.0);
    assert!((lp_norm(&f, 2.0) - 2.0).abs() < 1e-14);
    let g = make_test_field(FieldKind::Gaussian, GridSpec::new(1, 7.0, 7.0, 200).unwrap(), &FieldParams::default()).unwrap();
    assert!((lp_norm(&g, 2.0) - std::f64::consts::PI.sqrt()).abs() < 1e-6);
}

#[test]
fn norm_converges_under_refinement() {
    let norms: Vec<f64> = [16, 32, 64, 128]
        .iter()
        .map(|&m| {
            let spec = GridSpec::new(2, 2.0, 2.0, m).unwrap();
            lp_norm(&make_test_field(FieldKind::BallIndicator, spec, &FieldParams::default()).unwrap(), 2.0)
        })
        .collect();
    let exact = (4.0 * std::f64::consts::PI / 3.0).sqrt();
    let errors: Vec<f64> = norms.iter().map(|v| (v - exact).abs()).collect();
    for (k, e) in errors.iter().enumerate() {
        let h = 4.0 / [16.0, 32.0, 64.0, 128.0][k];
        assert!(*e <= 2.0 * h, "m index {k}: error {e}");
    }
    assert!(errors[3] < errors[0]);
}

#[test]
fn dilations_compose() {
    let f = make_test_field(FieldKind::Gaussian, GridSpec::new(1, 4.0, 4.0, 64).unwrap(), &FieldParams::default()).unwrap();
    let twice = dilate(&dilate(&f, 2.0).unwrap(), 2.0).unwrap();
    let once = dilate(&f, 4.0).unwrap();
    assert_eq!(twice.spec(), once.spec());
    let diff: f64 = twice.values().iter().zip(once.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let size: f64 = once.values().iter().map(|b| b * b).sum::<f64>().sqrt();
    assert!(diff / size < 1e-2);

    let ratio = lp_norm(&dilate(&f, 2.0).unwrap(), 2.0) / lp_norm(&f, 2.0);
    assert!((ratio / 2f64.powf(-1.0) - 1.0).abs() < 1e-2);
}

#[test]
fn field_names() {
    for kind in FieldKind::ALL {
        assert_eq!(FieldKind::from_name(kind.name()).unwrap(), kind);
    }
    assert!(FieldKind::from_name("sawtooth").is_err());
}
