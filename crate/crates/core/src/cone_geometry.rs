//! Geometry of the light cone `|s| > |y|` in `R^n x R`.
//!
//! Points are described by their cone coordinates `u = |s| + |y|` and
//! `v = |s| - |y|`. The dyadic cell `(ell, j)` collects the points with
//! `2^j <= u < 2^{j+1}` and `2^{j-ell} <= v < 2^{j-ell+1}`; both time signs
//! belong to the same cell. All dyadic intervals are left-closed and
//! right-open, so the cells tile the open cone exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Samples drawn from one random stream in [`mc_measure`].
pub const MC_CHUNK: usize = 8192;

/// `floor(log2(x))` for finite `x > 0`, computed from the exponent bits.
pub fn floor_log2(x: f64) -> i32 {
    debug_assert!(x > 0.0 && x.is_finite());
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 {
        let mant = bits & ((1u64 << 52) - 1);
        -1074 + (63 - mant.leading_zeros() as i32)
    } else {
        exp - 1023
    }
}

/// Smallest integer `j` with `x <= 2^j`.
pub fn ceil_log2(x: f64) -> i32 {
    let j = floor_log2(x);
    if pow2(j) == x {
        j
    } else {
        j + 1
    }
}

/// `2^k`, exact over the normal range.
#[inline]
pub fn pow2(k: i32) -> f64 {
    2f64.powi(k)
}

/// A point `(y, s)` of `R^n x R`, `1 <= n <= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    n: usize,
    y: [f64; MAX_DIM],
    s: f64,
}

impl ConePoint {
    /// Panics when `y` is empty or longer than [`MAX_DIM`].
    pub fn new(y: &[f64], s: f64) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&y.len()),
            "spatial dimension must be in 1..={MAX_DIM}"
        );
        let mut buf = [0.0; MAX_DIM];
        buf[..y.len()].copy_from_slice(y);
        Self { n: y.len(), y: buf, s }
    }

    pub fn origin(n: usize) -> Self {
        Self::new(&vec![0.0; n], 0.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn y(&self) -> &[f64] {
        &self.y[..self.n]
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// `|y|`
    pub fn radius(&self) -> f64 {
        self.y().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `|s| + |y|`
    pub fn u(&self) -> f64 {
        self.s.abs() + self.radius()
    }

    /// `|s| - |y|`
    pub fn v(&self) -> f64 {
        self.s.abs() - self.radius()
    }

    /// Membership in the open cone `|s| > |y|`.
    pub fn in_cone(&self) -> bool {
        self.v() > 0.0
    }

    /// The point expressed relative to `center`, i.e. `self - center`.
    pub fn relative_to(&self, center: &ConePoint) -> ConePoint {
        debug_assert_eq!(self.n, center.n);
        let mut y = self.y;
        for (a, b) in y.iter_mut().zip(center.y()) {
            *a -= b;
        }
        ConePoint {
            n: self.n,
            y,
            s: self.s - center.s,
        }
    }

    pub fn scaled(&self, lambda: f64) -> ConePoint {
        let mut y = self.y;
        y.iter_mut().for_each(|c| *c *= lambda);
        ConePoint {
            n: self.n,
            y,
            s: self.s * lambda,
        }
    }
}

/// Dyadic cone cell `Lambda_{ell j}`: scale `2^j` and eccentricity `2^{-ell}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub ell: u32,
    pub j: i32,
}

impl CellIndex {
    pub fn new(ell: u32, j: i32) -> Self {
        Self { ell, j }
    }

    /// `[2^j, 2^{j+1})`
    pub fn u_range(&self) -> (f64, f64) {
        (pow2(self.j), pow2(self.j + 1))
    }

    /// `[2^{j-ell}, 2^{j-ell+1})`
    pub fn v_range(&self) -> (f64, f64) {
        let k = self.j - self.ell as i32;
        (pow2(k), pow2(k + 1))
    }

    /// Membership of the cone coordinates `(u, v)`.
    pub fn contains_uv(&self, u: f64, v: f64) -> bool {
        let (u0, u1) = self.u_range();
        let (v0, v1) = self.v_range();
        u0 <= u && u < u1 && v0 <= v && v < v1
    }
}

/// The dyadic cell of a point of the cone, or `None` outside the cone.
pub fn classify(point: &ConePoint) -> Option<CellIndex> {
    let v = point.v();
    if !(v > 0.0) {
        return None;
    }
    let u = point.u();
    let j = floor_log2(u);
    let jv = floor_log2(v);
    assert!(jv <= j, "v <= u must hold for every point");
    Some(CellIndex {
        ell: (j - jv) as u32,
        j,
    })
}

/// Membership of `point` in the translated cell `Lambda_{ell j}(center)`.
pub fn cell_contains(cell: CellIndex, center: &ConePoint, point: &ConePoint) -> bool {
    let rel = point.relative_to(center);
    cell.contains_uv(rel.u(), rel.v())
}

/// A translated cell whose dyadic windows are widened by `2^{+-3}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarCell {
    pub base: CellIndex,
    pub center: ConePoint,
}

impl StarCell {
    pub fn new(base: CellIndex, center: ConePoint) -> Self {
        Self { base, center }
    }
}

/// Membership in `Lambda*_{ell j}(x, t)`.
pub fn star_contains(star: &StarCell, point: &ConePoint) -> bool {
    let rel = point.relative_to(&star.center);
    let (u, v) = (rel.u(), rel.v());
    let j = star.base.j;
    let k = j - star.base.ell as i32;
    pow2(j - 3) <= u && u < pow2(j + 3) && pow2(k - 3) <= v && v < pow2(k + 3)
}

/// Surface measure of the unit sphere `S^{n-1}` (counting measure for `n = 1`).
pub fn sphere_measure(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("unsupported dimension {n}"),
    }
}

/// Exact volume of `Lambda_{ell j}` (both time signs).
///
/// In cone coordinates the volume element is `r^{n-1} / 2 du dv dS(omega)`
/// with `r = (u - v) / 2`, so the volume reduces to
/// `|S^{n-1}| 2^{1-n} * int int (u - v)^{n-1} du dv` over the `(u, v)` box,
/// clipped to `v <= u` when `ell = 0`.
pub fn cell_volume(n: usize, cell: CellIndex) -> f64 {
    let (a, b) = cell.u_range();
    let (c, d) = cell.v_range();
    let k = (n - 1) as i32;
    // antiderivative of (u - v)^k integrated twice
    let big_f = |x: f64| x.powi(k + 2) / f64::from((k + 1) * (k + 2));
    let area = if cell.ell == 0 {
        // triangle a <= v <= u < b
        big_f(b - a)
    } else {
        big_f(b - c) - big_f(b - d) - big_f(a - c) + big_f(a - d)
    };
    sphere_measure(n) * 2f64.powi(-k) * area
}

/// Directions `{y^nu}` equally distributed on `S^{n-1}` with grid length
/// about `B 2^{-eta}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub n: usize,
    pub eta: u32,
    pub b: f64,
    pub directions: Vec<[f64; MAX_DIM]>,
}

/// Build the direction set: `{-1, +1}` for `n = 1`, equal angles for
/// `n = 2`, a Fibonacci point set for `n = 3`.
pub fn build_sphere_grid(n: usize, eta: u32, b: f64) -> Result<SphereGrid> {
    if !(1..=MAX_DIM).contains(&n) {
        return Err(Error::UnsupportedDimension(n));
    }
    if eta < 1 {
        return Err(invalid("sphere grid requires eta >= 1"));
    }
    if !(0.5..=2.0).contains(&b) {
        return Err(invalid(format!("grid constant B = {b} must lie in [1/2, 2]")));
    }
    let spacing = b * pow2(-(eta as i32));
    let directions = match n {
        1 => vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
        2 => {
            let count = ((2.0 * PI / spacing).round() as usize).max(2);
            (0..count)
                .map(|k| {
                    let phi = 2.0 * PI * k as f64 / count as f64;
                    [phi.cos(), phi.sin(), 0.0]
                })
                .collect()
        }
        _ => {
            let count = ((4.0 * PI / (spacing * spacing)).round() as usize).max(4);
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (2 * i + 1) as f64 / count as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    [rho * phi.cos(), rho * phi.sin(), z]
                })
                .collect()
        }
    };
    Ok(SphereGrid {
        n,
        eta,
        b,
        directions,
    })
}

impl SphereGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Chord half-aperture `2 * 2^{1-eta}` of every sector.
    pub fn aperture(&self) -> f64 {
        2.0 * pow2(1 - self.eta as i32)
    }

    /// Nominal grid length `B 2^{-eta}`.
    pub fn spacing(&self) -> f64 {
        self.b * pow2(-(self.eta as i32))
    }

    /// Mean distance from each direction to its nearest neighbour.
    pub fn mean_nearest_distance(&self) -> f64 {
        let dirs = &self.directions;
        let total: f64 = dirs
            .iter()
            .enumerate()
            .map(|(i, a)| {
                dirs.iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, b)| chord(a, b))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / dirs.len() as f64
    }

    /// Does the unit vector `omega` belong to sector `nu`?
    pub fn sector_contains_unit(&self, nu: usize, omega: &[f64; MAX_DIM]) -> bool {
        chord(omega, &self.directions[nu]) <= self.aperture()
    }
}

fn chord(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The geometric cone `Gamma^nu_eta` around one grid direction.
#[derive(Clone, Copy, Debug)]
pub struct SectorIndex<'a> {
    pub grid: &'a SphereGrid,
    pub nu: usize,
}

/// Exact test of `|y/|y| - y^nu| <= 2 * 2^{1-eta}`.
pub fn sector_contains(sector: SectorIndex<'_>, y: &[f64]) -> Result<bool> {
    let norm = y.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    if y.len() != sector.grid.n {
        return Err(invalid("vector dimension does not match the sphere grid"));
    }
    let mut omega = [0.0; MAX_DIM];
    for (o, c) in omega.iter_mut().zip(y) {
        *o = c / norm;
    }
    Ok(sector.grid.sector_contains_unit(sector.nu, &omega))
}

/// Axis-aligned box in `R^n x R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub lo: ConePoint,
    pub hi: ConePoint,
}

impl BoundingBox {
    pub fn new(lo: ConePoint, hi: ConePoint) -> Self {
        assert_eq!(lo.n(), hi.n());
        Self { lo, hi }
    }

    /// Box `center + [-half_y, half_y]^n x [-half_s, half_s]`.
    pub fn centered(center: &ConePoint, half_y: f64, half_s: f64) -> Self {
        let lo: Vec<f64> = center.y().iter().map(|c| c - half_y).collect();
        let hi: Vec<f64> = center.y().iter().map(|c| c + half_y).collect();
        Self::new(
            ConePoint::new(&lo, center.s() - half_s),
            ConePoint::new(&hi, center.s() + half_s),
        )
    }

    /// Box enclosing the translated cell `Lambda_{ell j}(center)`.
    pub fn around_cell(cell: CellIndex, center: &ConePoint) -> Self {
        Self::centered(center, pow2(cell.j), pow2(cell.j + 1))
    }

    /// Box enclosing the starred cell.
    pub fn around_star(star: &StarCell) -> Self {
        Self::centered(&star.center, pow2(star.base.j + 3), pow2(star.base.j + 3))
    }

    pub fn volume(&self) -> f64 {
        let spatial: f64 = self
            .lo
            .y()
            .iter()
            .zip(self.hi.y())
            .map(|(a, b)| (b - a).max(0.0))
            .product();
        spatial * (self.hi.s() - self.lo.s()).max(0.0)
    }

    pub fn intersect(&self, other: &BoundingBox) -> BoundingBox {
        let lo: Vec<f64> = self
            .lo
            .y()
            .iter()
            .zip(other.lo.y())
            .map(|(a, b)| a.max(*b))
            .collect();
        let hi: Vec<f64> = self
            .hi
            .y()
            .iter()
            .zip(other.hi.y())
            .map(|(a, b)| a.min(*b))
            .collect();
        BoundingBox::new(
            ConePoint::new(&lo, self.lo.s().max(other.lo.s())),
            ConePoint::new(&hi, self.hi.s().min(other.hi.s())),
        )
    }

    fn sample(&self, rng: &mut impl Rng) -> ConePoint {
        let n = self.lo.n();
        let mut y = [0.0; MAX_DIM];
        for (i, c) in y.iter_mut().enumerate().take(n) {
            let (a, b) = (self.lo.y()[i], self.hi.y()[i]);
            *c = a + (b - a) * rng.gen::<f64>();
        }
        let s = self.lo.s() + (self.hi.s() - self.lo.s()) * rng.gen::<f64>();
        ConePoint::new(&y[..n], s)
    }
}

/// Random stream `stream` of the generator seeded with `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte Carlo estimate of the volume of `region` inside `bbox`.
///
/// Returns `(estimate, standard error)`. Samples are split into fixed chunks
/// of [`MC_CHUNK`], chunk `c` drawing from stream `c` of the seeded
/// generator, so the result depends only on `(seed, samples)` and not on
/// the thread schedule.
pub fn mc_measure<F>(region: F, bbox: &BoundingBox, samples: usize, seed: u64) -> Result<(f64, f64)>
where
    F: Fn(&ConePoint) -> bool + Sync,
{
    if samples < 1000 {
        return Err(invalid("Monte Carlo measure needs at least 1000 samples"));
    }
    let volume = bbox.volume();
    if !(volume > 0.0) {
        return Err(Error::DegenerateBox);
    }
    let chunks = samples.div_ceil(MC_CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut rng = seeded_stream(seed, c as u64);
            (0..len).filter(|_| region(&bbox.sample(&mut rng))).count() as u64
        })
        .sum();
    let frac = hits as f64 / samples as f64;
    let estimate = volume * frac;
    let std_error = volume * (frac * (1.0 - frac) / samples as f64).sqrt();
    Ok((estimate, std_error))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_log2_matches_powers() {
        for k in -60..60 {
            let x = pow2(k);
            assert_eq!(floor_log2(x), k);
            assert_eq!(floor_log2(x * 1.5), k);
            assert_eq!(ceil_log2(x), k);
            assert_eq!(ceil_log2(x * 1.0000001), k + 1);
        }
        assert_eq!(floor_log2(f64::MIN_POSITIVE / 4.0), -1024);
    }

    #[test]
    fn classify_examples() {
        let p = ConePoint::new(&[0.75, 0.0], 1.25);
        assert_eq!(p.u(), 2.0);
        assert_eq!(p.v(), 0.5);
        assert_eq!(classify(&p), Some(CellIndex::new(2, 1)));

        // u exactly 1: left-closed
        let p = ConePoint::new(&[0.0], 1.0);
        assert_eq!(classify(&p).unwrap().j, 0);

        assert_eq!(classify(&ConePoint::new(&[1.0], 1.0)), None);
        assert_eq!(classify(&ConePoint::new(&[2.0, 0.0], -1.0)), None);
        assert_eq!(classify(&ConePoint::new(&[0.2], -1.0)), Some(CellIndex::new(1, 0)));
    }

    #[test]
    fn cell_contains_examples() {
        let cell = CellIndex::new(0, 0);
        let origin = ConePoint::origin(1);
        let p = ConePoint::new(&[0.0], 1.5);
        assert!(cell_contains(cell, &origin, &p));
        let shifted = ConePoint::new(&[10.0], 0.0);
        assert!(!cell_contains(cell, &shifted, &p));
    }

    #[test]
    fn star_boundary_is_right_open() {
        let star = StarCell::new(CellIndex::new(1, 0), ConePoint::origin(1));
        // u = 2^3 exactly with v inside the widened window
        let p = ConePoint::new(&[3.0], 5.0);
        assert_eq!(p.u(), 8.0);
        assert!(!star_contains(&star, &p));
        let q = ConePoint::new(&[2.9], 5.0);
        assert!(star_contains(&star, &q));
    }

    #[test]
    fn sphere_grid_counts() {
        let g = build_sphere_grid(1, 5, 1.0).unwrap();
        assert_eq!(g.len(), 2);
        let g = build_sphere_grid(2, 3, 1.0).unwrap();
        assert_eq!(g.len(), 50);
        assert!(g.len() as f64 <= 16.0 * 2f64.powi(3));
        assert!(build_sphere_grid(4, 2, 1.0).is_err());
        assert!(build_sphere_grid(2, 2, 3.0).is_err());
        assert!(build_sphere_grid(2, 0, 1.0).is_err());
    }

    #[test]
    fn sector_membership() {
        let g = build_sphere_grid(2, 4, 1.0).unwrap();
        let d = g.directions[3];
        let sector = SectorIndex { grid: &g, nu: 3 };
        assert!(sector_contains(sector, &[d[0] * 2.0, d[1] * 2.0]).unwrap());
        // angular distance 2^{2-eta} gives a chord below the aperture
        let phi = (d[1]).atan2(d[0]) + pow2(2 - 4);
        assert!(sector_contains(sector, &[phi.cos(), phi.sin()]).unwrap());
        assert!(matches!(sector_contains(sector, &[0.0, 0.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn n1_cell_volumes() {
        assert_eq!(cell_volume(1, CellIndex::new(0, 0)), 1.0);
        assert_eq!(cell_volume(1, CellIndex::new(1, 0)), 1.0);
        assert_eq!(cell_volume(1, CellIndex::new(3, 2)), pow2(2 * 2 - 3 + 1));
    }

    #[test]
    fn empty_region_has_zero_measure() {
        let bbox = BoundingBox::centered(&ConePoint::origin(2), 1.0, 1.0);
        let (est, err) = mc_measure(|_| false, &bbox, 5000, 1).unwrap();
        assert_eq!((est, err), (0.0, 0.0));
        let flat = BoundingBox::centered(&ConePoint::origin(2), 1.0, 0.0);
        assert!(matches!(mc_measure(|_| true, &flat, 5000, 1), Err(Error::DegenerateBox)));
        assert!(mc_measure(|_| true, &bbox, 10, 1).is_err());
    }

    #[test]
    fn mc_is_deterministic() {
        let bbox = BoundingBox::centered(&ConePoint::origin(1), 2.0, 2.0);
        let a = mc_measure(|p| p.in_cone(), &bbox, 20_000, 7).unwrap();
        let b = mc_measure(|p| p.in_cone(), &bbox, 20_000, 7).unwrap();
        assert_eq!(a, b);
        // half of the square lies in the cone
        assert!((a.0 - 8.0).abs() < 4.0 * a.1);
    }
}
