//! Acceptance checks: one pass/fail line per criterion.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use conefrac::{
    cell_volume_check, hedberg_check, intersection_bound_check, kernel_eval, make_test_field,
    n1_oracle_check, ortho_decay, scaling_experiment, theta_sum_check_with, ConeOperator, ConePoint,
    ExperimentReport, FieldKind, FieldParams, GridSpec, IntersectionConfig, KernelParams, OrthoConfig,
    QuadratureOptions, Result,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240601;
const CELL_VOLUME_SAMPLES: usize = 1 << 18;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn failed_flags(reports: &[&ExperimentReport]) -> String {
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| r.flags.iter().filter(|(_, &v)| !v).map(move |(k, _)| format!("{}:{k}", r.experiment)))
        .collect();
    if failed.is_empty() {
        String::new()
    } else {
        format!("; failed flags {}", failed.join(","))
    }
}

fn random_cone_point(rng: &mut impl Rng, n: usize) -> ConePoint {
    loop {
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let s = rng.gen_range(-4.0..4.0);
        let p = ConePoint::new(&y, s);
        if p.v() > 1e-6 {
            return p;
        }
    }
}

fn kernel_homogeneity() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        let params = KernelParams::new(n, 0.5 * n as f64)?;
        let degree = (n as f64 + 1.0) * (1.0 - params.alpha / n as f64);
        for _ in 0..10_000 {
            let p = random_cone_point(&mut rng, n);
            let k = kernel_eval(&params, &p)?;
            for lambda in [0.5, 2.0, 4.0] {
                let kl = kernel_eval(&params, &p.scaled(lambda))? * lambda.powf(degree);
                worst = worst.max((kl / k - 1.0).abs());
            }
        }
    }
    Ok(outcome(worst <= 1e-12, format!("max relative error {worst:.3e} (tolerance 1e-12)")))
}

fn oracle_equivalence() -> Result<Outcome> {
    let r = n1_oracle_check(0.5, &[64, 128], 1.8)?;
    Ok(outcome(
        r.passed(),
        format!(
            "violations {} at m=64, {} at m=128; gap {:.3e} -> {:.3e}, gain {:.2} (need >= 1.8){}",
            r.metrics["violations_m64"],
            r.metrics["violations_m128"],
            r.metrics["gap_m64"],
            r.metrics["gap_m128"],
            r.metrics["min_gap_gain"],
            failed_flags(&[&r])
        ),
    ))
}

fn dilation_scaling() -> Result<Outcome> {
    let opts = QuadratureOptions::default();
    let lambdas = [1.0, 2.0, 4.0];
    let mut reports = Vec::new();
    let n1 = KernelParams::new(1, 0.5)?;
    let f1 = make_test_field(FieldKind::Gaussian, GridSpec::new(1, 2.0, 2.0, 64)?, &FieldParams::default())?;
    for inv_q in [0.0, 0.1] {
        reports.push(scaling_experiment(&f1, &n1, 2.0, 1.0 / inv_q, &lambdas, &opts)?);
    }
    let n2 = KernelParams::new(2, 1.0)?;
    let f2 = make_test_field(FieldKind::Gaussian, GridSpec::new(2, 2.0, 2.0, 48)?, &FieldParams::default())?;
    for inv_q in [1.0 / 6.0, 1.0 / 6.0 + 0.1] {
        reports.push(scaling_experiment(&f2, &n2, 1.5, 1.0 / inv_q, &lambdas, &opts)?);
    }
    let worst = reports.iter().map(|r| r.metrics["exponent_error"]).fold(0.0, f64::max);
    let slowest = reports.iter().map(|r| r.runtime_s).fold(0.0, f64::max);
    let fits: Vec<String> = reports
        .iter()
        .map(|r| format!("{:.4}/{:.4}", r.metrics["exponent_fit"], r.metrics["exponent_expected"]))
        .collect();
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    Ok(outcome(
        reports.iter().all(|r| r.passed()) && slowest < 300.0,
        format!(
            "fit/expected {}; max error {worst:.3e} (tolerance 0.05); slowest case {slowest:.1}s (budget 300s){}",
            fits.join(", "),
            failed_flags(&refs)
        ),
    ))
}

fn theta_normalisation() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut reports = Vec::new();
    for (n, alpha, m) in [(1, 0.5, 64), (2, 1.0, 64)] {
        let spec = GridSpec::new(n, 2.0, 2.0, m)?;
        let params = KernelParams::new(n, alpha)?;
        let op = ConeOperator::new(&spec, &params, &QuadratureOptions::default())?;
        for kind in FieldKind::ALL {
            let f = make_test_field(kind, spec, &FieldParams::default())?;
            let r = theta_sum_check_with(&op, &f, 2.0)?;
            worst = worst.max(r.metrics["max_theta_sum"]);
            reports.push(r);
        }
    }
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    Ok(outcome(
        reports.iter().all(|r| r.passed()),
        format!("max sum over fields and grids {worst:.6} (bound 1 + 1e-6){}", failed_flags(&refs)),
    ))
}

fn hedberg_points() -> Vec<ConePoint> {
    let mut points = Vec::new();
    for a in -3..=3 {
        for b in -3..=3 {
            points.push(ConePoint::new(&[0.5 * a as f64], 0.5 * b as f64));
        }
    }
    points
}

fn hedberg_bound() -> Result<Outcome> {
    let params = KernelParams::new(1, 0.5)?;
    let points = hedberg_points();
    let mut reports = Vec::new();
    for m in [64, 128] {
        let f = make_test_field(FieldKind::Gaussian, GridSpec::new(1, 2.0, 2.0, m)?, &FieldParams::default())?;
        reports.push(hedberg_check(&f, &params, 4.0 / 3.0, 4.0, &points, &QuadratureOptions::default())?);
    }
    let (a, b) = (reports[0].metrics["max_ratio"], reports[1].metrics["max_ratio"]);
    let drift = a.max(b) / a.min(b);
    let refs: Vec<&ExperimentReport> = reports.iter().collect();
    Ok(outcome(
        drift < 2.0 && reports.iter().all(|r| r.passed()),
        format!(
            "max ratio {a:.4} (m=64), {b:.4} (m=128), drift {drift:.3} (< 2); decay slopes {:.3}, {:.3} (bound {:.3}){}",
            reports[0].metrics["decay_slope"],
            reports[1].metrics["decay_slope"],
            reports[1].metrics["decay_slope_bound"],
            failed_flags(&refs)
        ),
    ))
}

fn ortho_report() -> Result<ExperimentReport> {
    let params = KernelParams::new(2, 1.0)?;
    let f = make_test_field(FieldKind::Gaussian, GridSpec::new(2, 2.0, 2.0, 48)?, &FieldParams::default())?;
    let p = 1.0 / (0.5 + 1.0 / 3.0);
    let cfg = OrthoConfig::new(3, (0..=6).collect())?;
    ortho_decay(&f, &params, p, &cfg, &QuadratureOptions::default())
}

fn intersection_report() -> Result<ExperimentReport> {
    intersection_bound_check(&IntersectionConfig {
        seed: SEED,
        ..Default::default()
    })
}

fn cell_volume_report() -> Result<ExperimentReport> {
    cell_volume_check(2, 10, CELL_VOLUME_SAMPLES, SEED)
}

fn almost_orthogonality(r: &ExperimentReport) -> Outcome {
    outcome(
        r.passed(),
        format!(
            "J(0) {:.4e}, J(6) {:.4e}, epsilon fit {:.4} (reference rate {:.4}){}",
            r.metrics["j_0"],
            r.metrics["j_6"],
            r.metrics["epsilon_fit"],
            r.metrics["reference_rate"],
            failed_flags(&[r])
        ),
    )
}

fn intersection_bound(r: &ExperimentReport) -> Outcome {
    outcome(
        r.passed(),
        format!(
            "fitted C {:.4e}, max test ratio {:.4e}, violations {}, unresolved {}, over cell volume {}{}",
            r.metrics["fitted_c"],
            r.metrics["max_test_ratio"],
            r.metrics["violations"],
            r.metrics["undefined_ratios"],
            r.metrics["lhs_over_cell_volume"],
            failed_flags(&[r])
        ),
    )
}

fn cell_volumes(r: &ExperimentReport) -> Result<Outcome> {
    let n1 = cell_volume_check(1, 10, CELL_VOLUME_SAMPLES, SEED)?;
    Ok(outcome(
        r.passed() && n1.passed(),
        format!(
            "max z-score {:.3} (n=2), {:.3} (n=1), limit 3{}",
            r.metrics["max_z_score"],
            n1.metrics["max_z_score"],
            failed_flags(&[r, &n1])
        ),
    ))
}

fn determinism(first: &[&ExperimentReport]) -> Result<Outcome> {
    let again = [ortho_report()?, intersection_report()?, cell_volume_report()?];
    let same: Vec<bool> = first.iter().zip(&again).map(|(a, b)| a.to_csv() == b.to_csv()).collect();
    Ok(outcome(
        same.iter().all(|&s| s),
        format!("identical CSV: ortho-decay {}, intersection {}, cone-measure {}", same[0], same[1], same[2]),
    ))
}

fn run(
    id: usize,
    name: &str,
    budget: Duration,
    check: impl FnOnce() -> Result<Outcome>,
) -> bool {
    let start = Instant::now();
    let result = check();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let (pass, detail) = match result {
        Ok(o) => (o.pass && in_budget, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {id} [{}] {name}: {detail}; runtime {:.2}s (budget {}s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    pass
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let mut all = true;
    all &= run(1, "kernel homogeneity", secs(1), kernel_homogeneity);
    all &= run(2, "separable oracle equivalence", secs(120), oracle_equivalence);
    all &= run(3, "dilation scaling", secs(1200), dilation_scaling);
    all &= run(4, "theta normalisation", secs(60), theta_normalisation);
    all &= run(5, "hedberg bound", secs(300), hedberg_bound);

    let mut ortho = None;
    all &= run(6, "almost orthogonality", secs(600), || {
        let r = ortho_report()?;
        let o = almost_orthogonality(&r);
        ortho = Some(r);
        Ok(o)
    });
    let mut inter = None;
    all &= run(7, "cone intersection bound", secs(300), || {
        let r = intersection_report()?;
        let o = intersection_bound(&r);
        inter = Some(r);
        Ok(o)
    });
    let mut volumes = None;
    all &= run(8, "cell volume oracle", secs(60), || {
        let r = cell_volume_report()?;
        let o = cell_volumes(&r)?;
        volumes = Some(r);
        Ok(o)
    });
    all &= run(9, "determinism", secs(900), || match (&ortho, &inter, &volumes) {
        (Some(a), Some(b), Some(c)) => determinism(&[a, b, c]),
        _ => Ok(outcome(false, "criteria 6-8 did not produce reports")),
    });

    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria FAIL");
        ExitCode::FAILURE
    }
}
