//! Reproducible numerical experiments with structured reports.
//!
//! Every experiment returns an [`ExperimentReport`]: the parameters needed to
//! rerun it, finite scalar metrics, pass/fail flags and per-sample CSV rows.

mod geometry;
mod hedberg;
mod orthogonality;
mod scaling;
mod survey;
mod theta_sum;

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Error, Result};
use crate::field::SampledField;

pub use geometry::{cell_volume_check, intersection_bound_check, radial_cell_volume, CellTuple, IntersectionConfig};
pub use hedberg::hedberg_check;
pub use orthogonality::{ortho_decay, OrthoConfig};
pub use scaling::scaling_experiment;
pub use survey::{n1_oracle_check, norm_ratio_survey, oracle_options};
pub use theta_sum::{theta_sum_check, theta_sum_check_with};

/// Outcome of one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub params: BTreeMap<String, Value>,
    pub metrics: BTreeMap<String, f64>,
    pub flags: BTreeMap<String, bool>,
    pub runtime_s: f64,
    #[serde(skip)]
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<String>>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        Self {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn param(&mut self, name: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.params.insert(name.to_string(), value);
    }

    /// Record a metric; non-finite values are rejected.
    pub fn metric(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.metrics.insert(name.to_string(), value);
        Ok(())
    }

    pub fn flag(&mut self, name: &str, pass: bool) {
        self.flags.insert(name.to_string(), pass);
    }

    pub fn row(&mut self, values: &[&dyn Display]) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(values.iter().map(|v| v.to_string()).collect());
    }

    /// Do all flags pass?
    pub fn passed(&self) -> bool {
        self.flags.values().all(|&f| f)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if let Some((name, _)) = report.metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(name.clone()));
        }
        Ok(report)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{}", self.columns.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// One line per metric and flag.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines: Vec<String> = self
            .metrics
            .iter()
            .map(|(k, v)| format!("{}: {k} = {v:.6e}", self.experiment))
            .collect();
        lines.extend(self.flags.iter().map(|(k, v)| {
            format!("{}: {k} {}", self.experiment, if *v { "pass" } else { "FAIL" })
        }));
        lines
    }
}

/// Least-squares line `y = slope * x + intercept`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("a line fit needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("a line fit needs at least two distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// `||f||_q`, with `q = inf` the maximum.
pub fn norm(f: &SampledField, q: f64) -> f64 {
    if q.is_infinite() {
        f.max()
    } else {
        f.lp_norm(q)
    }
}

/// Independent seed for the `index`-th Monte Carlo run of an experiment.
pub(crate) fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trip() {
        let mut r = ExperimentReport::new("demo", &["a", "b"]);
        r.param("n", 2);
        r.param("alpha", 0.5);
        r.metric("ratio", 0.1 + 0.2).unwrap();
        r.metric("tiny", 1e-300).unwrap();
        r.flag("ok", true);
        r.row(&[&1, &0.25]);
        assert!(r.metric("bad", f64::NAN).is_err());
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.metrics, r.metrics);
        assert_eq!(back.params, r.params);
        assert_eq!(back.flags, r.flags);
        assert_eq!(r.to_csv(), "a,b\n1,0.25\n");
        assert!(r.passed());
        r.flag("bad", false);
        assert!(!r.passed());
    }

    #[test]
    fn line_fit() {
        let (s, c) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((s - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(fit_line(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(derive_seed(7, 0), derive_seed(7, 1));
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
    }
}
