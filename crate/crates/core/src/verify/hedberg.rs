//! The pointwise bound of `Delta_ell I f` by `theta_ell`, `M_eta f` and `||f||_p`.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::cone_geometry::{build_sphere_grid, CellIndex, ConePoint};
use crate::error::{invalid, Result};
use crate::field::SampledField;
use crate::maximal::{solve_rho, theta_levels_at, SectorMaximal};
use crate::operator::{ConeOperator, KernelParams, QuadratureOptions};

use super::{fit_line, ExperimentReport};

/// Evaluate `ratio = Delta_ell I f / [theta_ell^{1/p-1/q} (M_eta f)^{p/q} ||f||_p^{1-p/q}]`
/// at every sample point and level, and the decay of the same normalisation
/// applied to single cells against `|j - rho_ell|`.
///
/// Points outside the grid or where `rho_ell` is undefined are counted and skipped.
/// The decay slope is fitted to the per-bin maxima of `log2` of the normalised
/// cell contribution over unit bins of `|j - rho_ell|`.
pub fn hedberg_check(
    f: &SampledField,
    params: &KernelParams,
    p: f64,
    q: f64,
    samples: &[ConePoint],
    opts: &QuadratureOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let n = params.n as f64;
    if !(p > 1.0 && q > p && q.is_finite()) {
        return Err(invalid(format!("exponents must satisfy 1 < p < q < inf (p = {p}, q = {q})")));
    }
    if (params.alpha / n - (1.0 / p - 1.0 / q)).abs() > 1e-9 {
        return Err(invalid(format!(
            "alpha/n = {} must equal 1/p - 1/q = {}",
            params.alpha / n,
            1.0 / p - 1.0 / q
        )));
    }
    let spec = *f.spec();
    let op = ConeOperator::new(&spec, params, opts)?;
    let window = *op.window();
    let grid = build_sphere_grid(params.n, window.ell_max, 1.0)?;
    let maximal = SectorMaximal::new(&op, &grid)?;
    let norm_p = f.lp_norm(p);

    let mut report = ExperimentReport::new(
        "hedberg",
        &["point", "node", "ell", "theta", "maximal", "rho", "delta", "ratio"],
    );
    report.param("n", params.n);
    report.param("alpha", params.alpha);
    report.param("p", p);
    report.param("q", q);
    report.param("grid", spec);
    report.param("quadrature", opts);
    report.param("window", window);
    report.param("samples", samples.len());

    let theta_exp = 1.0 / p - 1.0 / q;
    let m_exp = p / q;
    let norm_factor = norm_p.powf(1.0 - p / q);
    let mut max_ratio: f64 = 0.0;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    let mut bins: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, point) in samples.iter().enumerate() {
        let Some(idx) = spec.nearest(point) else {
            skipped += 1;
            continue;
        };
        let m_val = maximal.averaged_at(f, idx)?;
        let thetas = theta_levels_at(&op, f, p, idx)?;
        for (ell, &theta) in thetas.iter().enumerate() {
            let ell = ell as u32;
            if !(m_val > 0.0 && theta > 0.0) {
                skipped += 1;
                continue;
            }
            let rho = solve_rho(theta, m_val, norm_p, ell, params, p)?;
            let denom = theta.powf(theta_exp) * m_val.powf(m_exp) * norm_factor;
            let delta = op.partial_at(f, ell, idx)?;
            let ratio = delta / denom;
            max_ratio = max_ratio.max(ratio);
            evaluated += 1;
            report.row(&[&k, &idx, &ell, &theta, &m_val, &rho, &delta, &ratio]);
            for j in window.j_min..=window.j_max {
                let c = op.cell_at(f, CellIndex::new(ell, j), idx)? / denom;
                if c > 0.0 {
                    let bin = (j as f64 - rho).abs().floor() as usize;
                    let entry = bins.entry(bin).or_insert(f64::NEG_INFINITY);
                    *entry = entry.max(c.log2());
                }
            }
        }
    }
    if evaluated == 0 {
        return Err(invalid("no sample point has a defined rho"));
    }
    let xs: Vec<f64> = bins.keys().map(|&b| b as f64 + 0.5).collect();
    let ys: Vec<f64> = bins.values().copied().collect();
    let (slope, _) = fit_line(&xs, &ys)?;
    let bound = -0.5 * (n + 1.0) * (params.alpha / n).min(1.0 / q);
    report.metric("max_ratio", max_ratio)?;
    report.metric("evaluated", evaluated as f64)?;
    report.metric("skipped", skipped as f64)?;
    report.metric("decay_slope", slope)?;
    report.metric("decay_slope_bound", bound)?;
    report.metric("decay_bins", bins.len() as f64)?;
    report.flag("ratio_finite", max_ratio.is_finite());
    report.flag("decay_slope_le_bound", slope <= bound);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}
