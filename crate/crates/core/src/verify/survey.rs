//! Norm ratios across the test-field library and the `n = 1` separable oracle.

use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::field::{dilate, make_test_field, FieldKind, FieldParams, GridSpec, SampledField};
use crate::operator::{apply_n1_separable, ConeOperator, KernelParams, QuadratureOptions};

use super::{norm, ExperimentReport};

/// Tolerance on the dilation invariance of the norm ratio.
pub const DILATION_TOLERANCE: f64 = 0.05;

fn ratio(f: &SampledField, params: &KernelParams, p: f64, q: f64, opts: &QuadratureOptions) -> Result<f64> {
    let nf = norm(f, p);
    if !(nf > 0.0) {
        return Err(Error::ZeroField);
    }
    let op = ConeOperator::new(f.spec(), params, opts)?;
    Ok(norm(&op.apply_full(f)?, q) / nf)
}

/// `||I^eta f||_q / ||f||_p` for every field kind and grid size, plus the
/// change of the ratio under `f -> f(2 .)` on the finest grid.
#[allow(clippy::too_many_arguments)]
pub fn norm_ratio_survey(
    kinds: &[FieldKind],
    params: &KernelParams,
    p: f64,
    q: f64,
    ms: &[usize],
    half_width: f64,
    half_time: f64,
    opts: &QuadratureOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let n = params.n as f64;
    if (params.alpha / n - (1.0 / p - 1.0 / q)).abs() > 1e-9 {
        return Err(invalid(format!(
            "alpha/n = {} must equal 1/p - 1/q = {}",
            params.alpha / n,
            1.0 / p - 1.0 / q
        )));
    }
    if kinds.is_empty() || ms.is_empty() {
        return Err(invalid("the survey needs at least one field and one grid size"));
    }
    if opts.j_min.is_some() || opts.j_max.is_some() {
        return Err(invalid("the survey derives the window from each grid"));
    }
    let mut report = ExperimentReport::new("survey", &["field", "m", "lambda", "ratio"]);
    report.param("n", params.n);
    report.param("alpha", params.alpha);
    report.param("p", p);
    report.param("q", q);
    report.param("fields", kinds.iter().map(|k| k.name()).collect::<Vec<_>>());
    report.param("grid_sizes", ms);
    report.param("half_width", half_width);
    report.param("half_time", half_time);
    report.param("quadrature", opts);

    let finest = *ms.iter().max().expect("non-empty");
    let mut sup: f64 = 0.0;
    let mut worst_dilation: f64 = 0.0;
    for &kind in kinds {
        for &m in ms {
            let spec = GridSpec::new(params.n, half_width, half_time, m)?;
            let f = make_test_field(kind, spec, &FieldParams::default())?;
            let r = ratio(&f, params, p, q, opts)?;
            sup = sup.max(r);
            report.row(&[&kind.name(), &m, &1.0, &r]);
            if m == finest {
                let rd = ratio(&dilate(&f, 2.0)?, params, p, q, opts)?;
                worst_dilation = worst_dilation.max((rd / r - 1.0).abs());
                report.row(&[&kind.name(), &m, &2.0, &rd]);
            }
        }
    }
    report.metric("sup_ratio", sup)?;
    report.metric("dilation_max_rel_dev", worst_dilation)?;
    report.flag("ratios_finite", sup.is_finite());
    report.flag("dilation_invariant", worst_dilation <= DILATION_TOLERANCE);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Options for the separable comparison: the cone path must reach far into
/// both the apex and the eccentricity tails to be compared with the
/// untruncated full-plane integral.
pub fn oracle_options(spec: &GridSpec) -> Result<QuadratureOptions> {
    let window = QuadratureOptions::default().window(spec)?;
    Ok(QuadratureOptions {
        j_min: Some(window.j_max - 30),
        ell_max: 40,
        ..Default::default()
    })
}

/// Compare the cone operator with the separable full-plane operator on a
/// unit Gaussian over `[-3, 3]^2`.
///
/// The full-plane kernel splits into the cone part and its image under
/// `(x, t) -> (t, x)`, so the separable result should equal
/// `I f + (I f^T)^T`; its relative `L^2` gap must shrink by `min_gain`
/// per grid doubling, and `I f` may not exceed the separable value.
pub fn n1_oracle_check(alpha: f64, ms: &[usize], min_gain: f64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if ms.len() < 2 {
        return Err(invalid("at least two grid sizes are needed for a refinement study"));
    }
    let params = KernelParams::new(1, alpha)?;
    let mut report = ExperimentReport::new(
        "n1-oracle",
        &["m", "violations", "max_excess", "gap_symmetric", "gap_cone_only"],
    );
    report.param("alpha", alpha);
    report.param("grid_sizes", ms);
    report.param("min_gain", min_gain);

    let mut gaps = Vec::new();
    let mut total_violations = 0usize;
    for &m in ms {
        let spec = GridSpec::new(1, 3.0, 3.0, m)?;
        let f = make_test_field(FieldKind::Gaussian, spec, &FieldParams::default())?;
        let op = ConeOperator::new(&spec, &params, &oracle_options(&spec)?)?;
        let cone = op.apply_full(&f)?;
        let mirrored = op.apply_full(&f.transposed()?)?.transposed()?;
        let sep = apply_n1_separable(&f, alpha)?;
        let scale = sep.max().max(1.0);
        let mut violations = 0usize;
        let mut max_excess: f64 = 0.0;
        let (mut num_sym, mut num_cone, mut den) = (0.0, 0.0, 0.0);
        for ((&c, &mi), &s) in cone.values().iter().zip(mirrored.values()).zip(sep.values()) {
            let excess = c - s;
            max_excess = max_excess.max(excess);
            if excess > 1e-10 * scale {
                violations += 1;
            }
            num_sym += (c + mi - s).powi(2);
            num_cone += (c - s).powi(2);
            den += s * s;
        }
        let gap = (num_sym / den).sqrt();
        let gap_cone = (num_cone / den).sqrt();
        total_violations += violations;
        gaps.push(gap);
        report.row(&[&m, &violations, &max_excess, &gap, &gap_cone]);
        report.metric(&format!("gap_m{m}"), gap)?;
        report.metric(&format!("violations_m{m}"), violations as f64)?;
    }
    let gains: Vec<f64> = gaps.windows(2).map(|w| w[0] / w[1]).collect();
    let min_observed = gains.iter().copied().fold(f64::INFINITY, f64::min);
    report.metric("min_gap_gain", min_observed)?;
    report.flag("cone_le_separable", total_violations == 0);
    report.flag("gap_shrinks", min_observed >= min_gain);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}
