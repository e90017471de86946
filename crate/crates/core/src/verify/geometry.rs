//! Monte Carlo checks of cell volumes and of the intersection bound for
//! translated cells.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cone_geometry::{
    cell_contains, cell_volume, mc_measure, pow2, seeded_stream, sphere_measure, star_contains,
    BoundingBox, CellIndex, ConePoint, StarCell, MAX_DIM,
};
use crate::error::{invalid, Error, Result};

use super::{derive_seed, ExperimentReport};

/// `|Lambda_{ell j}|` by integrating the measure of the radial slice
/// `{y : (y, s) in Lambda_{ell j}}` over `|s|`, for both time signs.
pub fn radial_cell_volume(n: usize, cell: CellIndex) -> Result<f64> {
    if !(1..=MAX_DIM).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    let (a, b) = cell.u_range();
    let (c, d) = cell.v_range();
    let ball = sphere_measure(n) / n as f64;
    let slice = |s: f64| {
        let lo = 0f64.max(a - s).max(s - d);
        let hi = (b - s).min(s - c);
        if hi > lo {
            ball * (hi.powi(n as i32) - lo.powi(n as i32))
        } else {
            0.0
        }
    };
    // the slice measure is a polynomial of degree n between these points
    let mut knots = vec![
        0.0,
        a,
        b,
        c,
        d,
        0.5 * (a + d),
        0.5 * (b + c),
        0.5 * (a + c),
        0.5 * (b + d),
    ];
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let total: f64 = knots
        .windows(2)
        .map(|w| {
            let (x0, x1) = (w[0], w[1]);
            (x1 - x0) / 6.0 * (slice(x0) + 4.0 * slice(0.5 * (x0 + x1)) + slice(x1))
        })
        .sum();
    Ok(2.0 * total)
}

/// Closed-form `|Lambda_{ell j}|` for `n = 1`.
fn n1_cell_volume(cell: CellIndex) -> f64 {
    if cell.ell == 0 {
        pow2(2 * cell.j)
    } else {
        pow2(2 * cell.j - cell.ell as i32 + 1)
    }
}

/// MC estimates of `|Lambda_{ell j}|` for random cells against the oracle:
/// the closed form for `n = 1`, the radial slice integral otherwise.
pub fn cell_volume_check(n: usize, cells: usize, samples: usize, seed: u64) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(1..=MAX_DIM).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    let mut report = ExperimentReport::new(
        "cone-measure",
        &["cell", "ell", "j", "estimate", "std_error", "oracle", "analytic", "z_score"],
    );
    report.param("n", n);
    report.param("cells", cells);
    report.param("samples", samples);
    report.param("seed", seed);
    let mut rng = seeded_stream(seed, u64::MAX);
    let origin = ConePoint::origin(n);
    let mut worst_z: f64 = 0.0;
    let mut worst_analytic: f64 = 0.0;
    for i in 0..cells {
        let cell = CellIndex::new(rng.gen_range(0..=5), rng.gen_range(-2..=2));
        let bbox = BoundingBox::around_cell(cell, &origin);
        let (est, se) = mc_measure(
            |p| cell_contains(cell, &origin, p),
            &bbox,
            samples,
            derive_seed(seed, i as u64),
        )?;
        let oracle = if n == 1 {
            n1_cell_volume(cell)
        } else {
            radial_cell_volume(n, cell)?
        };
        let analytic = cell_volume(n, cell);
        let z = (est - oracle).abs() / se.max(f64::MIN_POSITIVE);
        worst_z = worst_z.max(z);
        worst_analytic = worst_analytic.max((analytic / oracle - 1.0).abs());
        report.row(&[&i, &cell.ell, &cell.j, &est, &se, &oracle, &analytic, &z]);
    }
    report.metric("max_z_score", worst_z)?;
    report.metric("analytic_max_rel_dev", worst_analytic)?;
    report.flag("within_3_sigma", worst_z <= 3.0);
    report.flag("analytic_matches_oracle", worst_analytic <= 1e-12);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// One cell `Lambda_{ell j}(x, t)` with translated cells
/// `Lambda_{ell-h, k_i}(x^i, t^i)` satisfying `j - h < k - 2 < j - 2`,
/// `k = min k_i`, and so `0 <= r = j - k + ell - h < ell - 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTuple {
    pub ell: u32,
    pub h: u32,
    pub j: i32,
    pub ks: Vec<i32>,
    pub center: ConePoint,
    pub others: Vec<ConePoint>,
}

impl CellTuple {
    pub fn new(ell: u32, h: u32, j: i32, ks: Vec<i32>, center: ConePoint, others: Vec<ConePoint>) -> Result<Self> {
        if ks.is_empty() || ks.len() != others.len() {
            return Err(invalid("need one translated cell per index k_i"));
        }
        if h > ell {
            return Err(invalid(format!("h = {h} exceeds ell = {ell}")));
        }
        let k = *ks.iter().min().expect("non-empty");
        let (ell_i, h_i) = (ell as i32, h as i32);
        if !(j - h_i < k - 2 && k - 2 < j - 2) {
            return Err(invalid(format!("indices must satisfy j - h < k - 2 < j - 2 (j = {j}, h = {h}, k = {k})")));
        }
        let r = j - k + ell_i - h_i;
        if !(0 <= r && r < ell_i - 2) {
            return Err(invalid(format!("r = {r} must lie in [0, ell - 2)")));
        }
        if others.iter().chain([&center]).any(|c| c.n() != center.n()) {
            return Err(invalid("all centres must share one dimension"));
        }
        Ok(Self { ell, h, j, ks, center, others })
    }

    pub fn k(&self) -> i32 {
        *self.ks.iter().min().expect("non-empty")
    }

    pub fn r(&self) -> u32 {
        (self.j - self.k() + self.ell as i32 - self.h as i32) as u32
    }

    fn secondary(&self) -> impl Iterator<Item = (CellIndex, &ConePoint)> {
        let ell = self.ell - self.h;
        self.ks.iter().zip(&self.others).map(move |(&k, c)| (CellIndex::new(ell, k), c))
    }

    /// MC estimates `(|lhs|, se, |rhs set|, se)`; the right side is not yet
    /// multiplied by `2^{j-k-h}`.
    pub fn measure(&self, samples: usize, seed: u64) -> Result<[f64; 4]> {
        let main = CellIndex::new(self.ell, self.j);
        let mut lhs_box = BoundingBox::around_cell(main, &self.center);
        for (cell, c) in self.secondary() {
            lhs_box = lhs_box.intersect(&BoundingBox::around_cell(cell, c));
        }
        let (lhs, lhs_se) = measure_or_zero(
            |p| cell_contains(main, &self.center, p) && self.secondary().all(|(cell, c)| cell_contains(cell, c, p)),
            &lhs_box,
            samples,
            derive_seed(seed, 0),
        )?;
        let star = StarCell::new(CellIndex::new(self.r(), self.j), self.center);
        let stars: Vec<StarCell> = self.secondary().map(|(cell, c)| StarCell::new(cell, *c)).collect();
        let mut rhs_box = BoundingBox::around_star(&star);
        for s in &stars {
            rhs_box = rhs_box.intersect(&BoundingBox::around_star(s));
        }
        let (rhs, rhs_se) = measure_or_zero(
            |p| star_contains(&star, p) && stars.iter().all(|s| star_contains(s, p)),
            &rhs_box,
            samples,
            derive_seed(seed, 1),
        )?;
        Ok([lhs, lhs_se, rhs, rhs_se])
    }
}

fn measure_or_zero<F>(region: F, bbox: &BoundingBox, samples: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&ConePoint) -> bool + Sync,
{
    if !(bbox.volume() > 0.0) {
        return Ok((0.0, 0.0));
    }
    mc_measure(region, bbox, samples, seed)
}

/// Setup of the intersection bound experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionConfig {
    pub n: usize,
    pub q_int: u32,
    /// Configurations checked against the fitted constant.
    pub configs: usize,
    /// Configurations used to fit the constant.
    pub calibration: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for IntersectionConfig {
    fn default() -> Self {
        Self {
            n: 2,
            q_int: 2,
            configs: 20,
            calibration: 20,
            samples: 1 << 18,
            seed: 2024,
        }
    }
}

fn unit_direction(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return w.iter().map(|x| x / r).collect();
        }
    }
}

/// A random offset lying in `Lambda_{ell j}(0, 0)`.
fn offset_in_cell(rng: &mut impl Rng, n: usize, cell: CellIndex) -> ConePoint {
    let (u0, u1) = cell.u_range();
    let (v0, v1) = cell.v_range();
    let u = rng.gen_range(u0..u1);
    let v = rng.gen_range(v0..v1.min(u));
    let radius = 0.5 * (u - v);
    let y: Vec<f64> = unit_direction(rng, n).iter().map(|w| w * radius).collect();
    let s = 0.5 * (u + v) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    ConePoint::new(&y, s)
}

/// Random tuple: `4 <= h <= 6`, `h <= ell <= h + 2`, `-1 <= j <= 1`,
/// `k` in `[j - h + 3, j - 1]`. A common point `z` is drawn in the main cell
/// around the origin and each translated centre is placed so that its cell
/// also contains `z`; all centres then lie within `2^{j+2}` of each other.
fn random_tuple(rng: &mut impl Rng, n: usize, q_int: u32) -> Result<CellTuple> {
    let h = rng.gen_range(4..=6u32);
    let ell = rng.gen_range(h..=h + 2);
    let j = rng.gen_range(-1..=1);
    let k = rng.gen_range(j - h as i32 + 3..=j - 1);
    let mut ks = vec![k];
    ks.extend((1..q_int - 1).map(|_| rng.gen_range(k..=j - 1)));
    let z = offset_in_cell(rng, n, CellIndex::new(ell, j));
    let others = ks
        .iter()
        .map(|&ki| {
            let w = offset_in_cell(rng, n, CellIndex::new(ell - h, ki));
            z.relative_to(&w)
        })
        .collect();
    CellTuple::new(ell, h, j, ks, ConePoint::origin(n), others)
}

/// Fit `C` as the largest calibration ratio `LHS / (2^{j-k-h} RHS)` and
/// count test configurations exceeding it by more than three combined
/// standard errors. Ratios are only formed where the right side exceeds
/// three of its standard errors.
pub fn intersection_bound_check(cfg: &IntersectionConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    if !(1..=MAX_DIM).contains(&cfg.n) {
        return Err(Error::UnsupportedDimension(cfg.n));
    }
    if cfg.q_int < 2 {
        return Err(invalid("q_int must be at least 2"));
    }
    if cfg.configs == 0 || cfg.calibration == 0 {
        return Err(invalid("need at least one test and one calibration configuration"));
    }
    let mut report = ExperimentReport::new(
        "intersection",
        &[
            "set", "config", "ell", "h", "j", "k", "r", "ks", "lhs", "lhs_se", "rhs", "rhs_se", "cell_volume",
            "ratio", "ratio_se",
        ],
    );
    report.param("config", cfg);

    let mut results = Vec::new();
    for (set, count, stream) in [("calibration", cfg.calibration, 0u64), ("test", cfg.configs, 1u64)] {
        let mut rng = seeded_stream(cfg.seed, u64::MAX - 1 - stream);
        for i in 0..count {
            let tuple = random_tuple(&mut rng, cfg.n, cfg.q_int)?;
            let run = derive_seed(cfg.seed, (stream << 32) | i as u64);
            let [lhs, lhs_se, rhs_raw, rhs_raw_se] = tuple.measure(cfg.samples, run)?;
            let factor = pow2(tuple.j - tuple.k() - tuple.h as i32);
            let (rhs, rhs_se) = (factor * rhs_raw, factor * rhs_raw_se);
            let ratio = (rhs > 3.0 * rhs_se && rhs > 0.0).then(|| {
                let r = lhs / rhs;
                let se = if lhs > 0.0 {
                    r * ((lhs_se / lhs).powi(2) + (rhs_se / rhs).powi(2)).sqrt()
                } else {
                    lhs_se / rhs
                };
                (r, se)
            });
            let vol = cell_volume(cfg.n, CellIndex::new(tuple.ell, tuple.j));
            let ks = tuple.ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
            let (r_txt, se_txt) = ratio.map_or((String::new(), String::new()), |(r, s)| (r.to_string(), s.to_string()));
            report.row(&[
                &set, &i, &tuple.ell, &tuple.h, &tuple.j, &tuple.k(), &tuple.r(), &ks, &lhs, &lhs_se, &rhs, &rhs_se,
                &vol, &r_txt, &se_txt,
            ]);
            results.push((set, lhs, lhs_se, vol, ratio));
        }
    }
    let fitted = results
        .iter()
        .filter(|r| r.0 == "calibration")
        .filter_map(|r| r.4.map(|(ratio, _)| ratio))
        .fold(f64::NEG_INFINITY, f64::max);
    if !fitted.is_finite() {
        return Err(invalid("no calibration configuration produced a resolvable right side"));
    }
    let tests: Vec<_> = results.iter().filter(|r| r.0 == "test").collect();
    let violations = tests
        .iter()
        .filter(|r| r.4.is_some_and(|(ratio, se)| ratio - 3.0 * se > fitted))
        .count();
    let undefined = tests.iter().filter(|r| r.4.is_none()).count();
    let over_volume = results.iter().filter(|r| r.1 - 3.0 * r.2 > r.3).count();
    let max_test = tests
        .iter()
        .filter_map(|r| r.4.map(|(ratio, _)| ratio))
        .fold(0.0, f64::max);
    report.metric("fitted_c", fitted)?;
    report.metric("max_test_ratio", max_test)?;
    report.metric("violations", violations as f64)?;
    report.metric("undefined_ratios", undefined as f64)?;
    report.metric("lhs_over_cell_volume", over_volume as f64)?;
    report.flag("no_violations", violations == 0);
    report.flag("lhs_le_cell_volume", over_volume == 0);
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_oracle_matches_closed_forms() {
        for n in 1..=3 {
            for ell in 0..5 {
                for j in -2..3 {
                    let cell = CellIndex::new(ell, j);
                    let a = radial_cell_volume(n, cell).unwrap();
                    let b = cell_volume(n, cell);
                    assert!((a / b - 1.0).abs() < 1e-12, "n={n} {cell:?}: {a} vs {b}");
                    if n == 1 {
                        assert!((a / n1_cell_volume(cell) - 1.0).abs() < 1e-12);
                    }
                }
            }
        }
        assert_eq!(n1_cell_volume(CellIndex::new(0, 0)), 1.0);
        assert_eq!(n1_cell_volume(CellIndex::new(1, 0)), 1.0);
    }

    #[test]
    fn tuple_preconditions() {
        let o = ConePoint::origin(2);
        assert!(CellTuple::new(6, 4, 0, vec![-1], o, vec![o]).is_ok());
        // h = 2 leaves no admissible k
        for k in -4..=0 {
            assert!(CellTuple::new(6, 2, 0, vec![k], o, vec![o]).is_err());
        }
        assert!(CellTuple::new(6, 4, 0, vec![-2], o, vec![]).is_err());
    }

    #[test]
    fn far_apart_centres_give_zero() {
        let o = ConePoint::origin(2);
        let far = ConePoint::new(&[100.0, 0.0], 0.0);
        let t = CellTuple::new(6, 4, 0, vec![-1], o, vec![far]).unwrap();
        let [lhs, lhs_se, _, _] = t.measure(4096, 1).unwrap();
        assert_eq!((lhs, lhs_se), (0.0, 0.0));
    }
}
