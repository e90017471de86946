//! Decay of the cross terms `J(h)` between partial operators `h` levels apart.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::SampledField;
use crate::operator::{ConeOperator, KernelParams, QuadratureOptions};

use super::{fit_line, ExperimentReport};

/// Level gaps to evaluate and the integer exponent of the cross term.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrthoConfig {
    pub q_int: u32,
    pub gaps: Vec<u32>,
}

impl OrthoConfig {
    pub fn new(q_int: u32, gaps: Vec<u32>) -> Result<Self> {
        if q_int < 2 {
            return Err(invalid(format!("q_int = {q_int} must be at least 2")));
        }
        if gaps.len() < 2 {
            return Err(invalid("at least two level gaps are needed to fit a rate"));
        }
        Ok(Self { q_int, gaps })
    }
}

/// `J(h) = int int sum_{ell=h}^{eta} (Delta_ell I f)(Delta_{ell-h} I f)^{q_int-1}`
/// for every configured gap, with `epsilon` fitted by least squares on
/// `log2 J(h)` against `h`. `p` must satisfy `alpha/n = 1/p - 1/q_int`.
pub fn ortho_decay(
    f: &SampledField,
    params: &KernelParams,
    p: f64,
    cfg: &OrthoConfig,
    opts: &QuadratureOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    let cfg = OrthoConfig::new(cfg.q_int, cfg.gaps.clone())?;
    let n = params.n as f64;
    let q = cfg.q_int as f64;
    if (params.alpha / n - (1.0 / p - 1.0 / q)).abs() > 1e-9 {
        return Err(invalid(format!(
            "alpha/n = {} must equal 1/p - 1/q_int = {}",
            params.alpha / n,
            1.0 / p - 1.0 / q
        )));
    }
    let spec = *f.spec();
    let op = ConeOperator::new(&spec, params, opts)?;
    let eta = op.window().ell_max;
    if let Some(&h) = cfg.gaps.iter().find(|&&h| h > eta) {
        return Err(invalid(format!("gap h = {h} exceeds the window cutoff eta = {eta}")));
    }
    let levels = op.apply_levels(f)?;
    let norm_q = f.lp_norm(p).powf(q);

    let mut report = ExperimentReport::new("ortho-decay", &["h", "terms", "j", "j_normalised", "log2_j"]);
    report.param("n", params.n);
    report.param("alpha", params.alpha);
    report.param("p", p);
    report.param("q_int", cfg.q_int);
    report.param("gaps", &cfg.gaps);
    report.param("grid", spec);
    report.param("quadrature", opts);
    report.param("window", op.window());

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut values = Vec::new();
    for &h in &cfg.gaps {
        let mut total = 0.0;
        for ell in h..=eta {
            let hi = levels[ell as usize].values();
            let lo = levels[(ell - h) as usize].values();
            total += hi
                .iter()
                .zip(lo)
                .map(|(a, b)| a * b.powi(cfg.q_int as i32 - 1))
                .sum::<f64>();
        }
        let j = total * spec.cell_volume();
        let log2_j = j.log2();
        report.row(&[&h, &(eta - h + 1), &j, &(j / norm_q), &log2_j]);
        report.metric(&format!("j_{h}"), j)?;
        xs.push(h as f64);
        ys.push(log2_j);
        values.push(j);
    }
    let (slope, _) = fit_line(&xs, &ys)?;
    let eps = -slope;
    let rate = (params.alpha / n).min(1.0 / q);
    let first = values[0];
    let last = values[values.len() - 1];
    report.metric("epsilon_fit", eps)?;
    report.metric("reference_rate", rate / 3.0)?;
    report.metric("reference_rate_n", n * rate / 3.0)?;
    report.flag("j_finite", values.iter().all(|v| v.is_finite()));
    report.flag("epsilon_positive", eps > 0.0);
    report.flag("j_last_le_j_first", last <= first);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_test_field, FieldKind, FieldParams, GridSpec};

    #[test]
    fn gaussian_decays() {
        let spec = GridSpec::new(1, 2.0, 2.0, 24).unwrap();
        let f = make_test_field(FieldKind::Gaussian, spec, &FieldParams::default()).unwrap();
        let params = KernelParams::new(1, 0.5).unwrap();
        let opts = QuadratureOptions {
            ell_max: 8,
            ..Default::default()
        };
        // 1/p = 1/2 + 1/3
        let p = 1.2;
        let cfg = OrthoConfig::new(3, (0..=4).collect()).unwrap();
        let r = ortho_decay(&f, &params, p, &cfg, &opts).unwrap();
        assert!(r.metrics["j_0"] > 0.0);
        assert!(r.passed(), "{:?}", r.metrics);
        let too_far = OrthoConfig::new(3, vec![0, 9]).unwrap();
        assert!(ortho_decay(&f, &params, p, &too_far, &opts).is_err());
        assert!(OrthoConfig::new(1, vec![0, 1]).is_err());
    }
}
