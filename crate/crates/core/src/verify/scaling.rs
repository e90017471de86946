//! Dilation scaling of `||I f_lambda||_q / ||f_lambda||_p`.

use std::time::Instant;

use crate::error::{invalid, Error, Result};
use crate::field::{dilate, SampledField};
use crate::operator::{ConeOperator, KernelParams, QuadratureOptions};

use super::{fit_line, norm, ExperimentReport};

/// Window options for the grid shrunk by `lambda`; explicit scales shift by `log2 lambda`.
fn dilated_options(opts: &QuadratureOptions, lambda: f64) -> Result<QuadratureOptions> {
    if opts.j_min.is_none() && opts.j_max.is_none() {
        return Ok(*opts);
    }
    let shift = lambda.log2().round();
    if (shift.exp2() - lambda).abs() > 1e-12 * lambda {
        return Err(invalid(format!(
            "lambda = {lambda} must be a power of two when the window scales are fixed"
        )));
    }
    let shift = shift as i32;
    Ok(QuadratureOptions {
        j_min: opts.j_min.map(|j| j - shift),
        j_max: opts.j_max.map(|j| j - shift),
        ..*opts
    })
}

/// Fit the exponent `e` in `||I f_lambda||_q / ||f_lambda||_p ~ lambda^e` and
/// compare it with `(n+1)(1/p - 1/q - alpha/n)`. `q` may be infinite.
pub fn scaling_experiment(
    f: &SampledField,
    params: &KernelParams,
    p: f64,
    q: f64,
    lambdas: &[f64],
    opts: &QuadratureOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(p >= 1.0 && q >= 1.0) {
        return Err(invalid(format!("exponents must be at least 1 (p = {p}, q = {q})")));
    }
    if lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(invalid("dilation factors must be positive"));
    }
    let mut distinct = lambdas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(invalid("at least two distinct dilation factors are needed to fit an exponent"));
    }
    let n = params.n as f64;
    let mut report = ExperimentReport::new("scaling", &["lambda", "norm_f_p", "norm_if_q", "ratio"]);
    report.param("n", params.n);
    report.param("alpha", params.alpha);
    report.param("p", p);
    report.param("q", if q.is_finite() { Some(q) } else { None });
    report.param("lambdas", lambdas);
    report.param("grid", f.spec());
    report.param("quadrature", opts);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &lambda in lambdas {
        let fl = dilate(f, lambda)?;
        let nf = norm(&fl, p);
        if !(nf > 0.0) {
            return Err(Error::ZeroField);
        }
        let op = ConeOperator::new(fl.spec(), params, &dilated_options(opts, lambda)?)?;
        let nif = norm(&op.apply_full(&fl)?, q);
        let ratio = nif / nf;
        report.row(&[&lambda, &nf, &nif, &ratio]);
        xs.push(lambda.log2());
        ys.push(ratio.log2());
    }
    let (slope, _) = fit_line(&xs, &ys)?;
    let expected = (n + 1.0) * (1.0 / p - 1.0 / q - params.alpha / n);
    let error = (slope - expected).abs();
    report.metric("exponent_fit", slope)?;
    report.metric("exponent_expected", expected)?;
    report.metric("exponent_error", error)?;
    report.flag("exponent_within_0.05", error <= 0.05);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}
