//! The bound `sum_ell theta_ell <= 1`.

use std::time::Instant;

use crate::error::{invalid, Result};
use crate::field::SampledField;
use crate::maximal::{cone_mass, theta_levels_at};
use crate::operator::{ConeOperator, KernelParams, QuadratureOptions};

use super::ExperimentReport;

/// Tolerance on `max sum_ell theta_ell - 1`.
pub const THETA_SUM_TOLERANCE: f64 = 1e-6;
/// Relative agreement of the per-level sum with the merged window mass.
pub const THETA_IDENTITY_TOLERANCE: f64 = 1e-10;
/// Nodes at which the per-level sum is recomputed.
const CHECK_NODES: usize = 48;

/// Maximum over the grid of `sum_ell theta_ell`, computed from the merged
/// window stencil, with the per-level sum recomputed at a spread of nodes.
pub fn theta_sum_check(
    f: &SampledField,
    params: &KernelParams,
    p: f64,
    opts: &QuadratureOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let op = ConeOperator::new(f.spec(), params, opts)?;
    let mut report = theta_sum_check_with(&op, f, p)?;
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// [`theta_sum_check`] with a prebuilt operator, so several fields on one
/// grid share the stencil construction.
pub fn theta_sum_check_with(op: &ConeOperator, f: &SampledField, p: f64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if f.spec() != op.spec() {
        return Err(invalid("the field and the operator must share one grid"));
    }
    let params = op.params();
    let total = cone_mass(op, f, p)?;
    let values = total.values();
    let (argmax, max_sum) = values
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });

    let mut report = ExperimentReport::new("theta-sum", &["node", "level_sum", "window_sum", "rel_dev"]);
    report.param("n", params.n);
    report.param("alpha", params.alpha);
    report.param("p", p);
    report.param("grid", f.spec());
    report.param("quadrature", op.options());
    report.param("window", op.window());

    let stride = (values.len() / CHECK_NODES).max(1);
    let mut nodes: Vec<usize> = (0..values.len()).step_by(stride).collect();
    nodes.push(argmax);
    let mut worst: f64 = 0.0;
    for &idx in &nodes {
        let level_sum: f64 = theta_levels_at(op, f, p, idx)?.iter().sum();
        let window_sum = values[idx];
        let dev = if window_sum > 0.0 {
            (level_sum - window_sum).abs() / window_sum
        } else {
            level_sum.abs()
        };
        worst = worst.max(dev);
        report.row(&[&idx, &level_sum, &window_sum, &dev]);
    }
    report.metric("max_theta_sum", max_sum)?;
    report.metric("identity_max_rel_dev", worst)?;
    report.flag("theta_sum_le_1", max_sum <= 1.0 + THETA_SUM_TOLERANCE);
    report.flag("level_sum_matches_window", worst <= THETA_IDENTITY_TOLERANCE);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}
