//! The light-cone fractional integral
//! `(I_alpha f)(x, t) = int int_Lambda f(x - y, t - s) Omega(y, s) dy ds` with
//! `Omega = (|s| + |y|)^{-(n - alpha)} (|s| - |y|)^{-(1 - alpha/n)}`,
//! its dyadic pieces and the separable `n = 1` path.
//!
//! The full operator is the limit of the partial sums
//! `I^eta_alpha = sum_{ell <= eta} Delta_ell I_alpha` as `eta -> infinity`;
//! [`ConeOperator::apply_full`] evaluates the partial sum for the window's
//! `eta = ell_max`.

mod convolve;
mod riesz;
mod stencil;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cone_geometry::{ceil_log2, CellIndex, ConePoint};
use crate::error::{invalid, Error, Result};
use crate::field::{GridSpec, SampledField};

pub use convolve::{convolve, convolve_at, SparseStencil};
pub use riesz::{apply_n1_separable, riesz_1d, Sampled1d};
pub use stencil::CellStencil;

pub(crate) use stencil::NodeGenerator;

/// Dimension `n` and order `alpha` of the kernel, `0 < alpha < n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub n: usize,
    pub alpha: f64,
}

impl KernelParams {
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::UnsupportedDimension(n));
        }
        if !(alpha > 0.0 && alpha < n as f64) {
            return Err(invalid(format!("alpha = {alpha} must lie in (0, n) with n = {n}")));
        }
        Ok(Self { n, alpha })
    }

    /// Degree of homogeneity `-(n+1)(1 - alpha/n)`.
    pub fn degree(&self) -> f64 {
        -((self.n + 1) as f64) * (1.0 - self.alpha / self.n as f64)
    }
}

/// `u^{-(n - alpha)} v^{-(1 - alpha/n)}` at a point of the open cone.
pub fn kernel_eval(params: &KernelParams, point: &ConePoint) -> Result<f64> {
    if point.n() != params.n {
        return Err(invalid("point dimension does not match the kernel"));
    }
    let v = point.v();
    if !(v > 0.0) {
        return Err(Error::OutsideCone(v));
    }
    let n = params.n as f64;
    Ok(point.u().powf(params.alpha - n) * v.powf(params.alpha / n - 1.0))
}

/// Truncation window and per-cell quadrature controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Smallest dyadic scale; defaults to `j_max - 12`.
    pub j_min: Option<i32>,
    /// Largest dyadic scale; defaults to `ceil(log2(reach))` of the grid.
    pub j_max: Option<i32>,
    /// Eccentricity cutoff `eta`.
    pub ell_max: u32,
    pub sub_u: usize,
    pub sub_v: usize,
    pub sub_omega: usize,
    /// Integrate `v^{alpha/n - 1}` exactly on each subinterval.
    pub v_weight_exact: bool,
    /// Quadrature nodes per grid spacing.
    pub resolution: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            j_min: None,
            j_max: None,
            ell_max: 12,
            sub_u: 1,
            sub_v: 1,
            sub_omega: 8,
            v_weight_exact: true,
            resolution: 4.0,
        }
    }
}

impl QuadratureOptions {
    pub fn validate(&self) -> Result<()> {
        if self.sub_u == 0 || self.sub_v == 0 || self.sub_omega == 0 {
            return Err(invalid("subdivision counts must be at least 1"));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(invalid("quadrature resolution must be positive"));
        }
        if let (Some(lo), Some(hi)) = (self.j_min, self.j_max) {
            if lo > hi {
                return Err(invalid(format!("j_min = {lo} exceeds j_max = {hi}")));
            }
        }
        Ok(())
    }

    /// The concrete window for a grid.
    pub fn window(&self, spec: &GridSpec) -> Result<Window> {
        self.validate()?;
        let j_max = match (self.j_max, self.j_min) {
            (Some(hi), _) => hi,
            (None, Some(lo)) => default_j_max(spec).max(lo),
            (None, None) => default_j_max(spec),
        };
        let j_min = self.j_min.unwrap_or(j_max - 12);
        if j_min > j_max {
            return Err(invalid(format!("j_min = {j_min} exceeds j_max = {j_max}")));
        }
        Ok(Window {
            j_min,
            j_max,
            ell_max: self.ell_max,
        })
    }
}

fn default_j_max(spec: &GridSpec) -> i32 {
    ceil_log2(spec.reach())
}

/// Dyadic scales `j_min..=j_max` and eccentricities `0..=ell_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub j_min: i32,
    pub j_max: i32,
    pub ell_max: u32,
}

impl Window {
    pub fn contains(&self, cell: CellIndex) -> bool {
        cell.ell <= self.ell_max && (self.j_min..=self.j_max).contains(&cell.j)
    }

    pub fn scales(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }

    /// Cells ordered by `ell`, then by increasing `j`.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..=self.ell_max)
            .flat_map(move |ell| (self.j_min..=self.j_max).map(move |j| CellIndex::new(ell, j)))
    }

    fn position(&self, cell: CellIndex) -> usize {
        cell.ell as usize * self.scales() + (cell.j - self.j_min) as usize
    }
}

/// Truncation and resolution report of a built operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Cells whose `v`-width is below the grid spacing.
    pub unresolved_cells: Vec<CellIndex>,
    /// Share of the kernel's `v`-integral beyond `ell_max`, `2^{-(eta+1) alpha/n}`.
    pub eccentricity_tail: f64,
    /// Share of the kernel mass below `u = 2^{j_min}` relative to `u < 2^{j_max+1}`.
    pub apex_tail: f64,
    /// Whether grid offsets reach beyond `u = 2^{j_max+1}`.
    pub outer_truncated: bool,
}

/// Stencils of every window cell for one grid and kernel.
#[derive(Clone, Debug)]
pub struct ConeOperator {
    params: KernelParams,
    spec: GridSpec,
    opts: QuadratureOptions,
    window: Window,
    cells: Vec<CellStencil>,
    level_kernels: Vec<SparseStencil>,
    level_volumes: Vec<SparseStencil>,
    window_kernel: SparseStencil,
    window_volume: SparseStencil,
    correction: Vec<f64>,
    diagnostics: Diagnostics,
}

impl ConeOperator {
    pub fn new(spec: &GridSpec, params: &KernelParams, opts: &QuadratureOptions) -> Result<Self> {
        spec.validate()?;
        if spec.n != params.n {
            return Err(Error::GridMismatch(format!(
                "grid dimension {} differs from kernel dimension {}",
                spec.n, params.n
            )));
        }
        let window = opts.window(spec)?;
        let gen = NodeGenerator::new(spec, params, opts);
        let set = stencil::StencilSet::build(&gen, &window, spec.cell_volume());
        if !set.unresolved.is_empty() {
            warn!(
                "{} of {} cells are narrower than the grid spacing",
                set.unresolved.len(),
                set.cells.len()
            );
        }
        let rate = params.alpha / params.n as f64;
        let diagnostics = Diagnostics {
            unresolved_cells: set.unresolved,
            eccentricity_tail: 2f64.powf(-((window.ell_max + 1) as f64) * rate),
            apex_tail: 2f64
                .powf(-((window.j_max + 1 - window.j_min) as f64) * (params.n + 1) as f64 * rate),
            outer_truncated: spec.reach() >= 2f64.powi(window.j_max + 1),
        };
        let scales = window.scales();
        let levels = |pick: fn(&CellStencil) -> &SparseStencil| -> Vec<SparseStencil> {
            set.cells
                .chunks(scales)
                .map(|level| SparseStencil::merge(level.iter().map(pick)))
                .collect()
        };
        let level_kernels = levels(|st| &st.kernel);
        let level_volumes = levels(|st| &st.volume);
        let window_kernel = SparseStencil::merge(&level_kernels);
        let window_volume = SparseStencil::merge(&level_volumes);
        Ok(Self {
            params: *params,
            spec: *spec,
            opts: *opts,
            window,
            cells: set.cells,
            level_kernels,
            level_volumes,
            window_kernel,
            window_volume,
            correction: set.correction,
            diagnostics,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn options(&self) -> &QuadratureOptions {
        &self.opts
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn cells(&self) -> &[CellStencil] {
        &self.cells
    }

    pub(crate) fn correction(&self) -> &[f64] {
        &self.correction
    }

    pub(crate) fn generator(&self) -> NodeGenerator {
        NodeGenerator::new(&self.spec, &self.params, &self.opts)
    }

    pub fn cell(&self, cell: CellIndex) -> Result<&CellStencil> {
        if !self.window.contains(cell) {
            return Err(Error::CellOutsideWindow(cell));
        }
        Ok(&self.cells[self.window.position(cell)])
    }

    fn check_level(&self, ell: u32) -> Result<()> {
        if ell > self.window.ell_max {
            return Err(invalid(format!(
                "ell = {ell} lies outside [0, {}]",
                self.window.ell_max
            )));
        }
        Ok(())
    }

    fn check_field(&self, f: &SampledField) -> Result<()> {
        if f.spec() != &self.spec {
            return Err(Error::GridMismatch(
                "field grid differs from the operator grid".into(),
            ));
        }
        Ok(())
    }

    /// `Delta_{ell j} I_alpha f` on the whole grid.
    pub fn apply_cell(&self, f: &SampledField, cell: CellIndex) -> Result<SampledField> {
        self.check_field(f)?;
        let st = self.cell(cell)?;
        Ok(SampledField::from_output(
            self.spec,
            convolve(&self.spec, &st.kernel, f.values()),
        ))
    }

    fn partial_values(&self, f: &SampledField, ell: u32) -> Vec<f64> {
        convolve(&self.spec, &self.level_kernels[ell as usize], f.values())
    }

    /// `Delta_ell I_alpha f = sum_j Delta_{ell j} I_alpha f`, from the merged level stencil.
    pub fn apply_partial(&self, f: &SampledField, ell: u32) -> Result<SampledField> {
        self.check_field(f)?;
        self.check_level(ell)?;
        Ok(SampledField::from_output(self.spec, self.partial_values(f, ell)))
    }

    /// Every partial operator `Delta_ell I_alpha f`, `ell = 0..=ell_max`.
    pub fn apply_levels(&self, f: &SampledField) -> Result<Vec<SampledField>> {
        self.check_field(f)?;
        Ok((0..=self.window.ell_max)
            .map(|ell| SampledField::from_output(self.spec, self.partial_values(f, ell)))
            .collect())
    }

    /// `I^eta_alpha f = sum_ell Delta_ell I_alpha f`, from the merged window stencil.
    pub fn apply_full(&self, f: &SampledField) -> Result<SampledField> {
        self.check_field(f)?;
        Ok(SampledField::from_output(
            self.spec,
            convolve(&self.spec, &self.window_kernel, f.values()),
        ))
    }

    /// `Delta_{ell j} I_alpha f` at the node `idx`.
    pub fn cell_at(&self, f: &SampledField, cell: CellIndex, idx: usize) -> Result<f64> {
        self.check_field(f)?;
        Ok(convolve_at(&self.spec, &self.cell(cell)?.kernel, f.values(), idx))
    }

    /// `Delta_ell I_alpha f` at the node `idx`.
    pub fn partial_at(&self, f: &SampledField, ell: u32, idx: usize) -> Result<f64> {
        self.check_field(f)?;
        self.check_level(ell)?;
        Ok(convolve_at(
            &self.spec,
            &self.level_kernels[ell as usize],
            f.values(),
            idx,
        ))
    }

    /// `I^eta_alpha f` at the node `idx`.
    pub fn full_at(&self, f: &SampledField, idx: usize) -> Result<f64> {
        self.check_field(f)?;
        Ok(convolve_at(&self.spec, &self.window_kernel, f.values(), idx))
    }

    /// Kernel stencil of all cells at level `ell`.
    pub fn level_kernel(&self, ell: u32) -> Result<&SparseStencil> {
        self.check_level(ell)?;
        Ok(&self.level_kernels[ell as usize])
    }

    /// Corrected volume stencil of all cells at level `ell`.
    pub fn level_volume(&self, ell: u32) -> Result<&SparseStencil> {
        self.check_level(ell)?;
        Ok(&self.level_volumes[ell as usize])
    }

    /// Kernel stencil of the whole window.
    pub fn window_kernel(&self) -> &SparseStencil {
        &self.window_kernel
    }

    /// Corrected volume stencil of the whole window.
    pub fn window_volume(&self) -> &SparseStencil {
        &self.window_volume
    }
}

/// Build the operator for `f`'s grid and evaluate one cell.
pub fn apply_cell(
    f: &SampledField,
    params: &KernelParams,
    cell: CellIndex,
    opts: &QuadratureOptions,
) -> Result<SampledField> {
    ConeOperator::new(f.spec(), params, opts)?.apply_cell(f, cell)
}

/// Build the operator for `f`'s grid and evaluate one level.
pub fn apply_partial(
    f: &SampledField,
    params: &KernelParams,
    ell: u32,
    opts: &QuadratureOptions,
) -> Result<SampledField> {
    if ell > opts.ell_max {
        return Err(invalid(format!("ell = {ell} lies outside [0, {}]", opts.ell_max)));
    }
    ConeOperator::new(f.spec(), params, opts)?.apply_partial(f, ell)
}

/// Build the operator for `f`'s grid and evaluate the partial sum up to `ell_max`.
pub fn apply_full(
    f: &SampledField,
    params: &KernelParams,
    opts: &QuadratureOptions,
) -> Result<SampledField> {
    ConeOperator::new(f.spec(), params, opts)?.apply_full(f)
}
