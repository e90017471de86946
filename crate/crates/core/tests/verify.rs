use std::collections::BTreeMap;

use conefrac::verify::CellTuple;
use conefrac::{
    cell_volume_check, intersection_bound_check, make_test_field, norm_ratio_survey, ortho_decay,
    scaling_experiment, theta_sum_check, ConePoint, ExperimentReport, FieldKind, FieldParams, GridSpec,
    IntersectionConfig, KernelParams, OrthoConfig, QuadratureOptions,
};
use proptest::prelude::*;

fn gaussian(n: usize, m: usize) -> conefrac::SampledField {
    make_test_field(FieldKind::Gaussian, GridSpec::new(n, 2.0, 2.0, m).unwrap(), &FieldParams::default()).unwrap()
}

fn small_opts() -> QuadratureOptions {
    QuadratureOptions {
        ell_max: 4,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reports_round_trip(
        metrics in prop::collection::btree_map("[a-z_]{1,12}", prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 0..8),
        flags in prop::collection::btree_map("[a-z_]{1,12}", any::<bool>(), 0..4),
        runtime in 0.0f64..1e4,
    ) {
        let mut r = ExperimentReport::new("demo", &["x"]);
        r.param("n", 2);
        r.param("grid", GridSpec::new(2, 1.0, 2.0, 8).unwrap());
        for (k, v) in &metrics {
            r.metric(k, *v).unwrap();
        }
        for (k, v) in &flags {
            r.flag(k, *v);
        }
        r.runtime_s = runtime;
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back.metrics, &metrics);
        prop_assert_eq!(&back.flags, &flags);
        prop_assert_eq!(&back.params, &r.params);
        prop_assert_eq!(back.runtime_s, runtime);
    }
}

#[test]
fn non_finite_metrics_are_rejected() {
    let mut r = ExperimentReport::new("demo", &[]);
    assert!(r.metric("x", f64::INFINITY).is_err());
    let text = r#"{"experiment":"demo","params":{},"metrics":{"x":null},"flags":{},"runtime_s":0.0}"#;
    assert!(ExperimentReport::from_json(text).is_err());
    let _ = BTreeMap::<String, f64>::new();
}

#[test]
fn scaling_examples() {
    let params = KernelParams::new(1, 0.5).unwrap();
    let f = gaussian(1, 32);
    let opts = small_opts();
    let on = scaling_experiment(&f, &params, 4.0 / 3.0, 4.0, &[1.0, 2.0, 4.0], &opts).unwrap();
    assert!(on.passed());
    assert!(on.metrics["exponent_fit"].abs() < 0.05);
    let off = scaling_experiment(&f, &params, 2.0, 10.0, &[1.0, 2.0, 4.0], &opts).unwrap();
    assert!((off.metrics["exponent_expected"] + 0.2).abs() < 1e-12);
    assert!((off.metrics["exponent_fit"] + 0.2).abs() < 0.05);
    assert!(scaling_experiment(&f, &params, 2.0, 4.0, &[1.0], &opts).is_err());
    assert!(scaling_experiment(&f, &params, 2.0, 4.0, &[2.0, 2.0], &opts).is_err());
}

#[test]
fn scaling_error_does_not_grow_under_refinement() {
    let params = KernelParams::new(1, 0.5).unwrap();
    let errors: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&m| {
            let r = scaling_experiment(&gaussian(1, m), &params, 4.0 / 3.0, 4.0, &[1.0, 2.0, 4.0], &small_opts()).unwrap();
            r.metrics["exponent_error"]
        })
        .collect();
    for w in errors.windows(2) {
        assert!(w[1] <= w[0].max(1e-9), "{errors:?}");
    }
}

#[test]
fn theta_sum_vanishes_where_the_support_is_off_cone() {
    let spec = GridSpec::new(1, 4.0, 4.0, 32).unwrap();
    let f = conefrac::SampledField::from_fn(spec, |p| if p.y()[0] > 3.0 && p.s().abs() < 0.5 { 1.0 } else { 0.0 });
    let params = KernelParams::new(1, 0.5).unwrap();
    let r = theta_sum_check(&f, &params, 2.0, &small_opts()).unwrap();
    assert!(r.passed());
    let op = conefrac::ConeOperator::new(&spec, &params, &small_opts()).unwrap();
    let total = conefrac::cone_mass(&op, &f, 2.0).unwrap();
    let corner = spec.nearest(&ConePoint::new(&[-4.0], 0.0)).unwrap();
    assert_eq!(total.values()[corner], 0.0);
}

#[test]
fn ortho_decay_examples() {
    let params = KernelParams::new(1, 0.5).unwrap();
    let f = gaussian(1, 24);
    let p = 1.0 / (0.5 + 1.0 / 3.0);
    let cfg = OrthoConfig::new(3, vec![0, 1, 2, 3]).unwrap();
    let r = ortho_decay(&f, &params, p, &cfg, &small_opts()).unwrap();
    assert!(r.metrics["j_0"] > 0.0);
    assert!((r.metrics["reference_rate"] - (0.5f64).min(1.0 / 3.0) / 3.0).abs() < 1e-15);
    let too_far = OrthoConfig::new(3, vec![0, 5]).unwrap();
    assert!(ortho_decay(&f, &params, p, &too_far, &small_opts()).is_err());
    assert!(OrthoConfig::new(1, vec![0, 1]).is_err());
    assert!(ortho_decay(&f, &params, 2.0, &cfg, &small_opts()).is_err());
}

#[test]
fn monte_carlo_experiments_are_deterministic() {
    let a = cell_volume_check(2, 4, 1 << 14, 99).unwrap();
    let b = cell_volume_check(2, 4, 1 << 14, 99).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_ne!(a.to_csv(), cell_volume_check(2, 4, 1 << 14, 100).unwrap().to_csv());
    let cfg = IntersectionConfig {
        configs: 4,
        calibration: 4,
        samples: 1 << 14,
        ..Default::default()
    };
    let x = intersection_bound_check(&cfg).unwrap();
    assert_eq!(x.to_csv(), intersection_bound_check(&cfg).unwrap().to_csv());
    assert_eq!(x.rows.len(), 8);
}

#[test]
fn intersection_tuples_check_indices() {
    let o = ConePoint::origin(2);
    let far = ConePoint::new(&[0.3, 0.0], 0.1);
    let t = CellTuple::new(6, 4, 0, vec![-1], o, vec![far]).unwrap();
    assert_eq!((t.k(), t.r()), (-1, 3));
    assert!(CellTuple::new(6, 4, 0, vec![-2], o, vec![far]).is_err());
    assert!(CellTuple::new(6, 2, 0, vec![-1], o, vec![far]).is_err());
    assert!(CellTuple::new(6, 4, 0, vec![-1, -1], o, vec![far]).is_err());
}

#[test]
fn survey_rejects_off_line_exponents() {
    let params = KernelParams::new(1, 0.5).unwrap();
    assert!(norm_ratio_survey(&FieldKind::ALL, &params, 2.0, 3.0, &[16], 2.0, 2.0, &small_opts()).is_err());
    let r = norm_ratio_survey(&[FieldKind::Gaussian], &params, 4.0 / 3.0, 4.0, &[16, 32], 2.0, 2.0, &small_opts()).unwrap();
    assert!(r.passed());
}
