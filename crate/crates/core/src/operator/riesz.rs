//! One-dimensional Riesz potentials and the separable `n = 1` operator.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::SampledField;

/// Uniform samples `values[i]` at `origin + i * spacing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampled1d {
    pub origin: f64,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl Sampled1d {
    pub fn position(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }
}

/// `int |sigma|^{alpha-1} d sigma` over `[delta - width/2, delta + width/2]`, `delta >= 0`.
pub(crate) fn cell_weight(delta: f64, width: f64, alpha: f64) -> f64 {
    let half = 0.5 * width;
    if delta < half {
        ((half - delta).powf(alpha) + (half + delta).powf(alpha)) / alpha
    } else {
        ((delta + half).powf(alpha) - (delta - half).powf(alpha)) / alpha
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("Riesz order must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// `int f(y) |x - y|^{alpha-1} dy` at every sample position, treating `f`
/// as constant on each sample cell and integrating the singular factor
/// exactly.
pub fn riesz_1d(f: &Sampled1d, alpha: f64) -> Result<Sampled1d> {
    check_alpha(alpha)?;
    if !(f.spacing > 0.0) {
        return Err(invalid("sample spacing must be positive"));
    }
    let n = f.values.len();
    let weights: Vec<f64> = (0..n)
        .map(|d| cell_weight(d as f64 * f.spacing, f.spacing, alpha))
        .collect();
    let values = (0..n)
        .map(|i| {
            f.values
                .iter()
                .enumerate()
                .map(|(k, &v)| v * weights[i.abs_diff(k)])
                .sum()
        })
        .collect();
    Ok(Sampled1d {
        origin: f.origin,
        spacing: f.spacing,
        values,
    })
}

/// The full-plane product potential
/// `int int f(x - y, t - s) |s + y|^{alpha-1} |s - y|^{alpha-1} dy ds`
/// evaluated by two one-dimensional Riesz potentials along the diagonals.
///
/// With `z = (x + t)/2` and `w = (t - x)/2` the kernel becomes
/// `2^{2 alpha - 1} |z|^{alpha-1} |w|^{alpha-1}`. Grid node `(i, k)` maps to
/// the diagonal indices `a = i + k` and `b = k - i + m - 1`, each a step of
/// `h/2`. Every sample stands for a `h/2 x h` rectangle in `(z, w)`.
pub fn apply_n1_separable(f: &SampledField, alpha: f64) -> Result<SampledField> {
    let spec = *f.spec();
    if spec.n != 1 {
        return Err(Error::UnsupportedDimension(spec.n));
    }
    check_alpha(alpha)?;
    let h = spec.hx();
    if (h - spec.ht()).abs() > 1e-12 * h {
        return Err(Error::GridMismatch(
            "the separable path needs equal space and time spacing".into(),
        ));
    }
    let m = spec.m;
    let side = 2 * m - 1;
    let step = 0.5 * h;
    let inner_w: Vec<f64> = (0..side)
        .map(|d| cell_weight(d as f64 * step, h, alpha))
        .collect();
    let outer_w: Vec<f64> = (0..side)
        .map(|d| cell_weight(d as f64 * step, step, alpha))
        .collect();
    let values = f.values();

    // inner potential along w for every diagonal a, at every b
    let mut g = vec![0.0; side * side];
    for a in 0..side {
        let i_lo = a.saturating_sub(m - 1);
        let i_hi = a.min(m - 1);
        let row = &mut g[a * side..(a + 1) * side];
        for i in i_lo..=i_hi {
            let k = a - i;
            let v = values[i * m + k];
            if v == 0.0 {
                continue;
            }
            let b = k + m - 1 - i;
            for (bp, out) in row.iter_mut().enumerate() {
                *out += v * inner_w[bp.abs_diff(b)];
            }
        }
    }

    // outer potential along z for every b
    let factor = 2f64.powf(2.0 * alpha - 1.0);
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for k in 0..m {
            let a = i + k;
            let b = k + m - 1 - i;
            let acc: f64 = (0..side).map(|ap| g[ap * side + b] * outer_w[ap.abs_diff(a)]).sum();
            out[i * m + k] = factor * acc;
        }
    }
    Ok(SampledField::from_output(spec, out))
}
