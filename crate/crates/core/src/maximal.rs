//! Sector maximal operators, the cell masses `theta_ell` and the balance
//! exponents `rho_ell`.
//!
//! The sector average over `Lambda_{ell j} cap Gamma^nu_eta` is normalised by
//! `2^j 2^{j-ell} 2^{(j-eta)(n-1)}`; `M^nu_eta` is its supremum over the
//! window cells and `M_eta = 2^{-eta(n-1)} sum_nu M^nu_eta`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone_geometry::{pow2, CellIndex, SphereGrid, MAX_DIM};
use crate::error::{invalid, Error, Result};
use crate::field::{GridSpec, SampledField};
use crate::operator::{convolve, convolve_at, ConeOperator, KernelParams, QuadratureOptions, SparseStencil};

/// Per-cell, per-sector volume stencils of a window.
#[derive(Clone, Debug)]
pub struct SectorMaximal {
    spec: GridSpec,
    grid: SphereGrid,
    cells: Vec<CellIndex>,
    /// `by_sector[nu]` lists `(cell position, stencil)` for non-empty pieces.
    by_sector: Vec<Vec<(usize, SparseStencil)>>,
    norms: Vec<f64>,
}

fn sectors_of(grid: &SphereGrid, omega: &[f64; MAX_DIM], out: &mut Vec<usize>) {
    out.clear();
    let count = grid.len();
    if grid.n == 2 && count > 16 {
        let step = 2.0 * std::f64::consts::PI / count as f64;
        let reach = 2.0 * (0.5 * grid.aperture()).min(1.0).asin();
        let span = (reach / step).ceil() as i64 + 1;
        if 2 * span + 1 < count as i64 {
            let centre = (omega[1].atan2(omega[0]) / step).round() as i64;
            for d in -span..=span {
                let nu = (centre + d).rem_euclid(count as i64) as usize;
                if grid.sector_contains_unit(nu, omega) {
                    out.push(nu);
                }
            }
            out.sort_unstable();
            return;
        }
    }
    out.extend((0..count).filter(|&nu| grid.sector_contains_unit(nu, omega)));
}

impl SectorMaximal {
    /// Split the operator's volume stencils by sector. The sphere grid must
    /// use the window's eccentricity cutoff as its `eta`.
    pub fn new(op: &ConeOperator, grid: &SphereGrid) -> Result<Self> {
        let window = *op.window();
        if grid.n != op.params().n {
            return Err(invalid("sphere grid dimension differs from the operator"));
        }
        if grid.eta != window.ell_max {
            return Err(invalid(format!(
                "sphere grid eta = {} must equal the window cutoff {}",
                grid.eta, window.ell_max
            )));
        }
        let gen = op.generator();
        let correction = op.correction();
        let n = grid.n as i32;
        let eta = grid.eta as i32;
        let mut cells = Vec::new();
        let mut by_sector: Vec<Vec<(usize, SparseStencil)>> = vec![Vec::new(); grid.len()];
        let mut norms = Vec::new();
        let mut hits = Vec::new();
        for cell in window.cells() {
            let mut acc: HashMap<(usize, u32), f64> = HashMap::new();
            gen.for_each_node(cell, |off, omega, _, vol| {
                sectors_of(grid, omega, &mut hits);
                for &nu in &hits {
                    *acc.entry((nu, off as u32)).or_insert(0.0) += vol;
                }
            });
            let mut entries: Vec<((usize, u32), f64)> = acc.into_iter().collect();
            entries.sort_unstable_by_key(|e| e.0);
            let c = cells.len();
            for ((nu, off), vol) in entries {
                let list = &mut by_sector[nu];
                if list.last().is_none_or(|(pos, _)| *pos != c) {
                    list.push((c, SparseStencil::default()));
                }
                let st = &mut list.last_mut().expect("just pushed").1;
                st.offsets.push(off);
                st.weights.push(vol * correction[off as usize]);
            }
            cells.push(cell);
            let j = cell.j;
            norms.push(1.0 / (pow2(j) * pow2(j - cell.ell as i32) * pow2((j - eta) * (n - 1))));
        }
        Ok(Self {
            spec: *op.spec(),
            grid: grid.clone(),
            cells,
            by_sector,
            norms,
        })
    }

    pub fn grid(&self) -> &SphereGrid {
        &self.grid
    }

    pub fn cells(&self) -> &[CellIndex] {
        &self.cells
    }

    fn check(&self, f: &SampledField, nu: usize) -> Result<()> {
        if f.spec() != &self.spec {
            return Err(Error::GridMismatch("field grid differs from the operator grid".into()));
        }
        if nu >= self.grid.len() {
            return Err(invalid(format!("sector {nu} does not exist")));
        }
        Ok(())
    }

    fn position(&self, cell: CellIndex) -> Result<usize> {
        self.cells
            .iter()
            .position(|&c| c == cell)
            .ok_or(Error::CellOutsideWindow(cell))
    }

    /// Normalised average of `f` over `Lambda_{ell j} cap Gamma^nu` at every node.
    pub fn cell_average(&self, f: &SampledField, cell: CellIndex, nu: usize) -> Result<SampledField> {
        self.check(f, nu)?;
        let c = self.position(cell)?;
        let out = match self.by_sector[nu].iter().find(|(pos, _)| *pos == c) {
            Some((_, st)) => convolve(&self.spec, st, f.values())
                .into_iter()
                .map(|v| v * self.norms[c])
                .collect(),
            None => vec![0.0; self.spec.len()],
        };
        Ok(SampledField::from_output(self.spec, out))
    }

    fn sector_values(&self, f: &SampledField, nu: usize) -> Vec<f64> {
        let mut best = vec![0.0f64; self.spec.len()];
        for (c, st) in &self.by_sector[nu] {
            let avg = convolve(&self.spec, st, f.values());
            let norm = self.norms[*c];
            best.par_iter_mut()
                .zip(&avg)
                .for_each(|(b, a)| *b = b.max(a * norm));
        }
        best
    }

    /// `M^nu_eta f` on the whole grid.
    pub fn sector(&self, f: &SampledField, nu: usize) -> Result<SampledField> {
        self.check(f, nu)?;
        Ok(SampledField::from_output(self.spec, self.sector_values(f, nu)))
    }

    /// `M_eta f` on the whole grid.
    pub fn averaged(&self, f: &SampledField) -> Result<SampledField> {
        self.check(f, 0)?;
        let mut acc = vec![0.0; self.spec.len()];
        for nu in 0..self.grid.len() {
            let part = self.sector_values(f, nu);
            acc.iter_mut().zip(&part).for_each(|(a, p)| *a += p);
        }
        let scale = self.averaging_factor();
        acc.iter_mut().for_each(|a| *a *= scale);
        Ok(SampledField::from_output(self.spec, acc))
    }

    fn averaging_factor(&self) -> f64 {
        pow2(-((self.grid.eta * (self.grid.n as u32 - 1)) as i32))
    }

    /// `M^nu_eta f` at the node `idx`.
    pub fn sector_at(&self, f: &SampledField, nu: usize, idx: usize) -> Result<f64> {
        self.check(f, nu)?;
        Ok(self.by_sector[nu]
            .iter()
            .map(|(c, st)| convolve_at(&self.spec, st, f.values(), idx) * self.norms[*c])
            .fold(0.0, f64::max))
    }

    /// `M_eta f` at the node `idx`.
    pub fn averaged_at(&self, f: &SampledField, idx: usize) -> Result<f64> {
        let mut total = 0.0;
        for nu in 0..self.grid.len() {
            total += self.sector_at(f, nu, idx)?;
        }
        Ok(total * self.averaging_factor())
    }
}

fn volume_operator(spec: &GridSpec, opts: &QuadratureOptions, grid: &SphereGrid) -> Result<ConeOperator> {
    // volume weights do not depend on the kernel order
    let params = KernelParams::new(spec.n, 0.5 * spec.n as f64)?;
    let opts = QuadratureOptions {
        ell_max: grid.eta,
        ..*opts
    };
    ConeOperator::new(spec, &params, &opts)
}

/// `M^nu_eta f` with the window cutoff taken from the sphere grid.
pub fn sector_maximal(
    f: &SampledField,
    grid: &SphereGrid,
    nu: usize,
    opts: &QuadratureOptions,
) -> Result<SampledField> {
    let op = volume_operator(f.spec(), opts, grid)?;
    SectorMaximal::new(&op, grid)?.sector(f, nu)
}

/// `M_eta f` with the window cutoff taken from the sphere grid.
pub fn averaged_maximal(f: &SampledField, grid: &SphereGrid, opts: &QuadratureOptions) -> Result<SampledField> {
    let op = volume_operator(f.spec(), opts, grid)?;
    SectorMaximal::new(&op, grid)?.averaged(f)
}

/// `f^p` and `||f||_p^p` for the theta normalisation.
fn powered(f: &SampledField, p: f64) -> Result<(Vec<f64>, f64)> {
    if !(p >= 1.0) {
        return Err(invalid(format!("p = {p} must be at least 1")));
    }
    let fp: Vec<f64> = f.values().iter().map(|v| v.powf(p)).collect();
    let mass = fp.iter().sum::<f64>() * f.spec().cell_volume();
    if !(mass > 0.0) {
        return Err(Error::ZeroField);
    }
    Ok((fp, mass))
}

/// The levels `theta_0, ..., theta_eta` and the norm used to normalise them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaProfile {
    pub levels: Vec<SampledField>,
    pub norm_p: f64,
}

impl ThetaProfile {
    /// `sum_ell theta_ell`, accumulated in increasing `ell`.
    pub fn sum(&self) -> SampledField {
        let spec = *self.levels[0].spec();
        let mut acc = vec![0.0; spec.len()];
        for level in &self.levels {
            acc.iter_mut().zip(level.values()).for_each(|(a, v)| *a += v);
        }
        SampledField::from_output(spec, acc)
    }
}

/// `theta_ell = ||f||_p^{-p} int int_{Lambda_ell cap window} f^p(x - y, t - s) dy ds`.
pub fn theta(op: &ConeOperator, f: &SampledField, p: f64, ell: u32) -> Result<SampledField> {
    let (fp, mass) = powered(f, p)?;
    let st = op.level_volume(ell)?.scaled(1.0 / mass);
    Ok(SampledField::from_output(*f.spec(), convolve(op.spec(), &st, &fp)))
}

/// `theta_ell` at the node `idx`.
pub fn theta_at(op: &ConeOperator, f: &SampledField, p: f64, ell: u32, idx: usize) -> Result<f64> {
    let (fp, mass) = powered(f, p)?;
    Ok(convolve_at(op.spec(), op.level_volume(ell)?, &fp, idx) / mass)
}

/// `theta_0, ..., theta_eta` at the node `idx`.
pub fn theta_levels_at(op: &ConeOperator, f: &SampledField, p: f64, idx: usize) -> Result<Vec<f64>> {
    let (fp, mass) = powered(f, p)?;
    (0..=op.window().ell_max)
        .map(|ell| Ok(convolve_at(op.spec(), op.level_volume(ell)?, &fp, idx) / mass))
        .collect()
}

/// All levels of `theta`.
pub fn theta_profile(op: &ConeOperator, f: &SampledField, p: f64) -> Result<ThetaProfile> {
    let (fp, mass) = powered(f, p)?;
    let levels = (0..=op.window().ell_max)
        .map(|ell| {
            let st = op.level_volume(ell)?.scaled(1.0 / mass);
            Ok(SampledField::from_output(*f.spec(), convolve(op.spec(), &st, &fp)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ThetaProfile {
        levels,
        norm_p: mass.powf(1.0 / p),
    })
}

/// `||f||_p^{-p} int int_{window} f^p`, computed from the merged window stencil.
pub fn cone_mass(op: &ConeOperator, f: &SampledField, p: f64) -> Result<SampledField> {
    let (fp, mass) = powered(f, p)?;
    let st = op.window_volume().scaled(1.0 / mass);
    Ok(SampledField::from_output(*f.spec(), convolve(op.spec(), &st, &fp)))
}

/// Real solution of `(2^{rho - ell} 2^{rho n})^{1/p} = theta^{1/p} ||f||_p / M`.
pub fn solve_rho(
    theta_val: f64,
    m_val: f64,
    norm_p: f64,
    ell: u32,
    params: &KernelParams,
    p: f64,
) -> Result<f64> {
    if !(theta_val > 0.0 && m_val > 0.0 && norm_p > 0.0) {
        return Err(invalid(format!(
            "theta = {theta_val}, M = {m_val} and the norm = {norm_p} must all be positive"
        )));
    }
    if !(p > 0.0) {
        return Err(invalid("p must be positive"));
    }
    let ratio = theta_val.powf(1.0 / p) * norm_p / m_val;
    Ok((ell as f64 + p * ratio.log2()) / (params.n + 1) as f64)
}

/// Relative residual of the defining identity of `rho` at a solution.
pub fn rho_residual(rho: f64, theta_val: f64, m_val: f64, norm_p: f64, ell: u32, n: usize, p: f64) -> f64 {
    let lhs = pow2_real((rho - ell as f64 + rho * n as f64) / p);
    let rhs = theta_val.powf(1.0 / p) * norm_p / m_val;
    (lhs / rhs - 1.0).abs()
}

fn pow2_real(x: f64) -> f64 {
    x.exp2()
}

/// `rho_ell` on the grid, undefined where `M_eta f = 0` or `theta_ell = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct RhoField {
    pub spec: GridSpec,
    levels: Vec<Vec<Option<f64>>>,
}

impl RhoField {
    pub fn compute(profile: &ThetaProfile, maximal: &SampledField, params: &KernelParams, p: f64) -> Result<Self> {
        let spec = *maximal.spec();
        let levels = profile
            .levels
            .iter()
            .enumerate()
            .map(|(ell, th)| {
                th.values()
                    .iter()
                    .zip(maximal.values())
                    .map(|(&t, &mv)| {
                        (t > 0.0 && mv > 0.0)
                            .then(|| solve_rho(t, mv, profile.norm_p, ell as u32, params, p))
                            .transpose()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, levels })
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn get(&self, ell: u32, idx: usize) -> Option<f64> {
        self.levels.get(ell as usize)?.get(idx).copied().flatten()
    }

    /// Number of defined values at level `ell`.
    pub fn defined(&self, ell: u32) -> usize {
        self.levels[ell as usize].iter().filter(|v| v.is_some()).count()
    }
}
