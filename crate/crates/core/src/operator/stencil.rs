//! Cone-coordinate quadrature nodes and per-cell stencils.
//!
//! Each cell is integrated in `(u, v, omega)` with `y = r omega`,
//! `|s| = (u + v)/2`, `r = (u - v)/2` and volume element
//! `r^{n-1} / 2 du dv d omega`, summed over both time signs. Nodes are
//! binned to the nearest grid offset.

use std::f64::consts::PI;

use crate::cone_geometry::{floor_log2, pow2, CellIndex, MAX_DIM};
use crate::field::GridSpec;

use super::convolve::{OffsetLayout, SparseStencil};
use super::{KernelParams, QuadratureOptions, Window};

/// Node placement for one grid, kernel and set of options.
#[derive(Clone, Debug)]
pub(crate) struct NodeGenerator {
    pub n: usize,
    pub m: usize,
    pub hx: f64,
    pub ht: f64,
    pub layout: OffsetLayout,
    delta: f64,
    umax: f64,
    alpha: f64,
    gamma: f64,
    opts: QuadratureOptions,
}

impl NodeGenerator {
    pub fn new(spec: &GridSpec, params: &KernelParams, opts: &QuadratureOptions) -> Self {
        let (hx, ht) = (spec.hx(), spec.ht());
        let half = spec.m as f64 - 0.5;
        Self {
            n: spec.n,
            m: spec.m,
            hx,
            ht,
            layout: OffsetLayout::new(spec),
            delta: hx.min(ht) / opts.resolution,
            umax: half * (ht + hx * (spec.n as f64).sqrt()),
            alpha: params.alpha,
            gamma: params.alpha / params.n as f64,
            opts: *opts,
        }
    }

    /// Smallest grid spacing.
    pub fn h_min(&self) -> f64 {
        self.hx.min(self.ht)
    }

    fn offset_of(&self, y: &[f64; MAX_DIM], s: f64) -> Option<usize> {
        let r = self.m as i64 - 1;
        let mut k = [0i64; MAX_DIM + 1];
        for (c, &x) in k.iter_mut().zip(&y[..self.n]) {
            *c = (x / self.hx).round() as i64;
        }
        k[self.n] = (s / self.ht).round() as i64;
        if k[..=self.n].iter().any(|c| c.abs() > r) {
            return None;
        }
        Some(self.layout.encode(&k[..=self.n]))
    }

    fn v_weight(&self, va: f64, vb: f64) -> f64 {
        let g = self.gamma;
        if self.opts.v_weight_exact {
            if va > 0.0 {
                va.powf(g) * (g * (vb / va).ln()).exp_m1() / g
            } else {
                vb.powf(g) / g
            }
        } else {
            (0.5 * (va + vb)).powf(g - 1.0) * (vb - va)
        }
    }

    fn for_each_direction(&self, r: f64, mut visit: impl FnMut(&[f64; MAX_DIM], f64)) {
        let sub = self.opts.sub_omega;
        match self.n {
            1 => {
                visit(&[-1.0, 0.0, 0.0], 1.0);
                visit(&[1.0, 0.0, 0.0], 1.0);
            }
            2 => {
                let count = sub.max((2.0 * PI * r / self.delta).ceil() as usize);
                let dw = 2.0 * PI / count as f64;
                for i in 0..count {
                    let (sin, cos) = ((i as f64 + 0.5) * dw).sin_cos();
                    visit(&[cos, sin, 0.0], dw);
                }
            }
            _ => {
                let bands = sub.max((PI * r / self.delta).ceil() as usize);
                let dphi = PI / bands as f64;
                for b in 0..bands {
                    let (pa, pb) = (b as f64 * dphi, (b + 1) as f64 * dphi);
                    let pm = 0.5 * (pa + pb);
                    let (sp, cp) = pm.sin_cos();
                    let count = sub.max((2.0 * PI * r * sp / self.delta).ceil() as usize);
                    let dpsi = 2.0 * PI / count as f64;
                    let dw = (pa.cos() - pb.cos()) * dpsi;
                    for i in 0..count {
                        let (ss, cs) = ((i as f64 + 0.5) * dpsi).sin_cos();
                        visit(&[sp * cs, sp * ss, cp], dw);
                    }
                }
            }
        }
    }

    /// Visit every node of `cell` that falls inside the offset cube as
    /// `(flat offset, direction, kernel weight, volume)`.
    pub fn for_each_node(
        &self,
        cell: CellIndex,
        mut visit: impl FnMut(usize, &[f64; MAX_DIM], f64, f64),
    ) {
        let (u0, u1) = cell.u_range();
        let u1 = u1.min(self.umax);
        if u0 >= u1 {
            return;
        }
        let nu = self.opts.sub_u.max(((u1 - u0) / self.delta).ceil() as usize);
        let du = (u1 - u0) / nu as f64;
        let mut emit = |u: f64, v: f64, area: f64, kernel: f64| {
            let r = 0.5 * (u - v);
            let abs_s = 0.5 * (u + v);
            let base = 0.5 * r.powi(self.n as i32 - 1);
            self.for_each_direction(r, |omega, dw| {
                let mut y = [0.0; MAX_DIM];
                for (c, w) in y.iter_mut().zip(omega) {
                    *c = r * w;
                }
                for s in [-abs_s, abs_s] {
                    if let Some(off) = self.offset_of(&y, s) {
                        visit(off, omega, base * dw * kernel, base * dw * area);
                    }
                }
            });
        };
        let power = self.alpha - self.n as f64;
        if cell.ell == 0 {
            // triangle u0 <= v <= u < u1 on a shared square lattice
            for iu in 0..nu {
                let ua = u0 + iu as f64 * du;
                let uc = ua + 0.5 * du;
                let ku = uc.powf(power);
                for iv in 0..iu {
                    let va = u0 + iv as f64 * du;
                    let vb = va + du;
                    emit(uc, 0.5 * (va + vb), du * du, ku * du * self.v_weight(va, vb));
                }
                let ub = ua + du;
                let g = self.gamma;
                let tri = ((ub.powf(g + 1.0) - ua.powf(g + 1.0)) / (g + 1.0) - ua.powf(g) * du) / g;
                let tri = if self.opts.v_weight_exact {
                    tri
                } else {
                    (ua + du / 3.0).powf(g - 1.0) * 0.5 * du * du
                };
                let ut = ua + 2.0 * du / 3.0;
                emit(ut, ua + du / 3.0, 0.5 * du * du, ut.powf(power) * tri);
            }
            return;
        }
        let (v0, v1) = cell.v_range();
        let nv = self.opts.sub_v.max(((v1 - v0) / self.delta).ceil() as usize);
        let dv = (v1 - v0) / nv as f64;
        for iu in 0..nu {
            let uc = u0 + (iu as f64 + 0.5) * du;
            let ku = uc.powf(power);
            for iv in 0..nv {
                let va = v0 + iv as f64 * dv;
                let vb = if iv + 1 == nv { v1 } else { va + dv };
                emit(uc, 0.5 * (va + vb), du * (vb - va), ku * du * self.v_weight(va, vb));
            }
        }
    }

    /// Is the grid box at `offset` contained in the union of window cells?
    pub fn box_inside_window(&self, offset: usize, window: &Window) -> bool {
        let k = self.layout.decode(offset);
        let ks = k[self.n];
        if ks == 0 {
            return false;
        }
        let s_lo = (ks.abs() as f64 - 0.5) * self.ht;
        let s_hi = (ks.abs() as f64 + 0.5) * self.ht;
        let (mut ylo, mut yhi) = (0.0, 0.0);
        for &c in &k[..self.n] {
            let a = c.abs() as f64;
            ylo += ((a - 0.5) * self.hx).max(0.0).powi(2);
            yhi += ((a + 0.5) * self.hx).powi(2);
        }
        let (ylo, yhi) = (ylo.sqrt(), yhi.sqrt());
        let min_u = s_lo + ylo;
        let max_u = s_hi + yhi;
        let min_v = s_lo - yhi;
        min_v > 0.0
            && min_u >= pow2(window.j_min)
            && max_u < pow2(window.j_max + 1)
            && min_v >= pow2(floor_log2(max_u) - window.ell_max as i32)
    }
}

/// Kernel and volume weights of one cell on shared offsets.
#[derive(Clone, Debug)]
pub struct CellStencil {
    pub cell: CellIndex,
    pub kernel: SparseStencil,
    pub volume: SparseStencil,
}

/// All cell stencils of a window plus the per-box volume correction.
#[derive(Clone, Debug)]
pub(crate) struct StencilSet {
    pub cells: Vec<CellStencil>,
    /// `C(k) / N(k)` per offset, zero where no node landed.
    pub correction: Vec<f64>,
    pub unresolved: Vec<CellIndex>,
}

impl StencilSet {
    pub fn build(gen: &NodeGenerator, window: &Window, box_volume: f64) -> Self {
        let size = gen.layout.size();
        let mut kernel_acc = vec![0.0; size];
        let mut volume_acc = vec![0.0; size];
        let mut stamp = vec![u32::MAX; size];
        let mut total = vec![0.0; size];
        let mut touched: Vec<usize> = Vec::new();
        let mut cells = Vec::new();
        let mut unresolved = Vec::new();
        for (id, cell) in window.cells().enumerate() {
            let id = id as u32;
            gen.for_each_node(cell, |off, _, kw, vol| {
                if stamp[off] != id {
                    stamp[off] = id;
                    touched.push(off);
                }
                kernel_acc[off] += kw;
                volume_acc[off] += vol;
                total[off] += vol;
            });
            touched.sort_unstable();
            let mut st = CellStencil {
                cell,
                kernel: SparseStencil::default(),
                volume: SparseStencil::default(),
            };
            for &off in &touched {
                st.kernel.offsets.push(off as u32);
                st.kernel.weights.push(kernel_acc[off]);
                st.volume.weights.push(volume_acc[off]);
                kernel_acc[off] = 0.0;
                volume_acc[off] = 0.0;
            }
            st.volume.offsets = st.kernel.offsets.clone();
            touched.clear();
            if !st.kernel.is_empty() && pow2(cell.j - cell.ell as i32) < gen.h_min() {
                unresolved.push(cell);
            }
            cells.push(st);
        }
        let correction: Vec<f64> = total
            .iter()
            .enumerate()
            .map(|(off, &nk)| {
                if nk <= 0.0 {
                    0.0
                } else if gen.box_inside_window(off, window) {
                    box_volume / nk
                } else {
                    box_volume.min(nk) / nk
                }
            })
            .collect();
        for st in &mut cells {
            for (&off, w) in st.volume.offsets.iter().zip(st.volume.weights.iter_mut()) {
                *w *= correction[off as usize];
            }
        }
        Self {
            cells,
            correction,
            unresolved,
        }
    }
}
