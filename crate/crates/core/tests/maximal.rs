use conefrac::maximal::{rho_residual, theta_levels_at};
use conefrac::{
    averaged_maximal, build_sphere_grid, lp_norm, make_test_field, solve_rho, theta, theta_profile, ConeOperator,
    ConePoint, FieldKind, FieldParams, GridSpec, KernelParams, QuadratureOptions, RhoField, SampledField,
    SectorMaximal,
};
use proptest::prelude::*;

fn volume_op(spec: &GridSpec, eta: u32) -> ConeOperator {
    let params = KernelParams::new(spec.n, 0.5 * spec.n as f64).unwrap();
    let opts = QuadratureOptions {
        ell_max: eta,
        ..Default::default()
    };
    ConeOperator::new(spec, &params, &opts).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn rho_round_trip(
        theta_val in 1e-8f64..1.0,
        m_val in 1e-6f64..1e6,
        norm_p in 1e-3f64..1e3,
        ell in 0u32..20,
        n in 1usize..=3,
        p in 1.0f64..8.0,
    ) {
        let params = KernelParams::new(n, 0.5 * n as f64).unwrap();
        let rho = solve_rho(theta_val, m_val, norm_p, ell, &params, p).unwrap();
        prop_assert!(rho_residual(rho, theta_val, m_val, norm_p, ell, n, p) <= 1e-10);
    }
}

#[test]
fn rho_examples() {
    let p1 = KernelParams::new(1, 0.5).unwrap();
    assert_eq!(solve_rho(1.0, 1.0, 1.0, 0, &p1, 2.0).unwrap(), 0.0);
    let p2 = KernelParams::new(2, 1.0).unwrap();
    // theta^{1/p} ||f|| / M = 2 with theta = 1
    let rho = solve_rho(1.0, 1.0, 2.0, 3, &p2, 2.0).unwrap();
    assert!((rho - 5.0 / 3.0).abs() < 1e-14);
    let mut last = f64::NEG_INFINITY;
    for k in 1..50 {
        let r = solve_rho(1.0, 1.0, 0.1 * k as f64, 3, &p2, 2.0).unwrap();
        assert!(r > last);
        last = r;
    }
    assert!(solve_rho(0.0, 1.0, 1.0, 0, &p1, 2.0).is_err());
}

#[test]
fn cone_bump_concentrates_theta() {
    let spec = GridSpec::new(1, 2.0, 2.0, 96).unwrap();
    let f = make_test_field(FieldKind::ConeBump, spec, &FieldParams::default()).unwrap();
    let op = ConeOperator::new(&spec, &KernelParams::new(1, 0.5).unwrap(), &QuadratureOptions::default()).unwrap();
    let idx = spec.nearest(&ConePoint::origin(1)).unwrap();
    let levels = theta_levels_at(&op, &f, 2.0, idx).unwrap();
    for (ell, t) in levels.iter().enumerate() {
        if ell == 2 {
            assert!(*t >= 0.9, "theta_2 = {t}");
        } else {
            assert!(*t <= 0.1, "theta_{ell} = {t}");
        }
    }
    let scaled = theta(&op, &f.scaled(7.0), 2.0, 2).unwrap();
    let plain = theta(&op, &f, 2.0, 2).unwrap();
    for (a, b) in scaled.values().iter().zip(plain.values()) {
        assert!((a - b).abs() <= 1e-12 * b.max(1e-300));
    }
}

#[test]
fn theta_sum_and_rho_field() {
    let spec = GridSpec::new(1, 2.0, 2.0, 32).unwrap();
    let f = make_test_field(FieldKind::BallIndicator, spec, &FieldParams::default()).unwrap();
    let params = KernelParams::new(1, 0.5).unwrap();
    let op = volume_op(&spec, 4);
    let profile = theta_profile(&op, &f, 2.0).unwrap();
    assert!(profile.levels.iter().all(|l| l.values().iter().all(|&v| v >= 0.0)));
    assert!(profile.sum().max() <= 1.0 + 1e-6);
    let grid = build_sphere_grid(1, 4, 1.0).unwrap();
    let m = SectorMaximal::new(&op, &grid).unwrap().averaged(&f).unwrap();
    let rho = RhoField::compute(&profile, &m, &params, 2.0).unwrap();
    assert_eq!(rho.levels(), 5);
    for ell in 0..5u32 {
        for idx in 0..spec.len() {
            let defined = m.values()[idx] > 0.0 && profile.levels[ell as usize].values()[idx] > 0.0;
            assert_eq!(rho.get(ell, idx).is_some(), defined);
        }
    }
}

#[test]
fn maximal_dominates_every_cell_average() {
    let spec = GridSpec::new(2, 1.0, 1.0, 12).unwrap();
    let f = make_test_field(FieldKind::Gaussian, spec, &FieldParams::default()).unwrap();
    let op = volume_op(&spec, 3);
    let grid = build_sphere_grid(2, 3, 1.0).unwrap();
    let maximal = SectorMaximal::new(&op, &grid).unwrap();
    for nu in (0..grid.len()).step_by(7) {
        let sup = maximal.sector(&f, nu).unwrap();
        for &cell in maximal.cells() {
            let avg = maximal.cell_average(&f, cell, nu).unwrap();
            for (a, s) in avg.values().iter().zip(sup.values()) {
                assert!(a <= s);
            }
        }
    }
}

#[test]
fn maximal_is_monotone_and_vanishes_on_zero() {
    let spec = GridSpec::new(1, 1.0, 1.0, 16).unwrap();
    let grid = build_sphere_grid(1, 4, 1.0).unwrap();
    let opts = QuadratureOptions::default();
    let f = make_test_field(FieldKind::Checkerboard, spec, &FieldParams::default()).unwrap();
    let g = SampledField::new(spec, f.values().iter().map(|v| v + 0.5).collect()).unwrap();
    let (mf, mg) = (averaged_maximal(&f, &grid, &opts).unwrap(), averaged_maximal(&g, &grid, &opts).unwrap());
    assert!(mf.values().iter().zip(mg.values()).all(|(a, b)| a <= b));
    assert_eq!(averaged_maximal(&SampledField::zeros(spec), &grid, &opts).unwrap().max(), 0.0);
}

#[test]
fn n1_averaged_is_the_sector_sum() {
    let spec = GridSpec::new(1, 1.0, 1.0, 16).unwrap();
    let f = make_test_field(FieldKind::Gaussian, spec, &FieldParams::default()).unwrap();
    let op = volume_op(&spec, 4);
    let grid = build_sphere_grid(1, 4, 1.0).unwrap();
    let maximal = SectorMaximal::new(&op, &grid).unwrap();
    let (a, b) = (maximal.sector(&f, 0).unwrap(), maximal.sector(&f, 1).unwrap());
    let avg = maximal.averaged(&f).unwrap();
    for ((x, y), z) in a.values().iter().zip(b.values()).zip(avg.values()) {
        assert!((x + y - z).abs() <= 1e-12 * z.max(1e-300));
    }
}

#[test]
fn constant_field_gives_order_one_averages() {
    let spec = GridSpec::new(2, 4.0, 4.0, 24).unwrap();
    let c = 3.0;
    let f = SampledField::from_fn(spec, |_| c);
    let eta = 3;
    let op = volume_op(&spec, eta);
    let grid = build_sphere_grid(2, eta, 1.0).unwrap();
    let maximal = SectorMaximal::new(&op, &grid).unwrap();
    let idx = spec.nearest(&ConePoint::origin(2)).unwrap();
    for nu in [0, 13, 31] {
        let v = maximal.sector_at(&f, nu, idx).unwrap() / c;
        assert!((1.0 / 16.0..=16.0).contains(&v), "sector {nu}: {v}");
    }
}

#[test]
fn maximal_norm_is_stable_under_refinement() {
    let grid = build_sphere_grid(1, 6, 1.0).unwrap();
    let ratios: Vec<f64> = [32, 64]
        .iter()
        .map(|&m| {
            let spec = GridSpec::new(1, 3.0, 3.0, m).unwrap();
            let f = make_test_field(FieldKind::Gaussian, spec, &FieldParams::default()).unwrap();
            let mf = averaged_maximal(&f, &grid, &QuadratureOptions::default()).unwrap();
            lp_norm(&mf, 2.0) / lp_norm(&f, 2.0)
        })
        .collect();
    assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
    assert!(ratios[0].max(ratios[1]) / ratios[0].min(ratios[1]) < 2.0, "{ratios:?}");
}
