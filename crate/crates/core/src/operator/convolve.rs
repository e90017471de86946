//! Sparse translation-invariant stencils and their grid convolution.
//!
//! Offsets live in the cube `[-(m-1), m-1]^{n+1}` and are stored as flat
//! indices with the time offset varying fastest. Output values are
//! `out[i] = sum_k w[k] f[i - k]` with `f = 0` outside the grid.

use rayon::prelude::*;

use crate::cone_geometry::MAX_DIM;
use crate::field::GridSpec;

/// Sorted flat offsets with one weight each.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseStencil {
    pub offsets: Vec<u32>,
    pub weights: Vec<f64>,
}

impl SparseStencil {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Sum several stencils; coincident offsets add in iteration order.
    pub fn merge<'a>(parts: impl IntoIterator<Item = &'a SparseStencil>) -> SparseStencil {
        let mut pairs: Vec<(u32, f64)> = parts
            .into_iter()
            .flat_map(|s| s.offsets.iter().copied().zip(s.weights.iter().copied()))
            .collect();
        pairs.sort_by_key(|&(o, _)| o);
        let mut out = SparseStencil::default();
        for (o, w) in pairs {
            if out.offsets.last() == Some(&o) {
                *out.weights.last_mut().expect("weights track offsets") += w;
            } else {
                out.offsets.push(o);
                out.weights.push(w);
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> SparseStencil {
        SparseStencil {
            offsets: self.offsets.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }
}

/// Encoding of offsets for a given grid.
#[derive(Clone, Copy, Debug)]
pub(crate) struct OffsetLayout {
    pub n: usize,
    pub m: usize,
}

impl OffsetLayout {
    pub fn new(spec: &GridSpec) -> Self {
        Self { n: spec.n, m: spec.m }
    }

    pub fn side(&self) -> usize {
        2 * self.m - 1
    }

    pub fn size(&self) -> usize {
        self.side().pow(self.n as u32 + 1)
    }

    pub fn encode(&self, k: &[i64]) -> usize {
        let r = self.m as i64 - 1;
        k.iter()
            .fold(0usize, |acc, &c| acc * self.side() + (c + r) as usize)
    }

    pub fn decode(&self, mut flat: usize) -> [i64; MAX_DIM + 1] {
        let r = self.m as i64 - 1;
        let mut k = [0; MAX_DIM + 1];
        for axis in (0..=self.n).rev() {
            k[axis] = (flat % self.side()) as i64 - r;
            flat /= self.side();
        }
        k
    }
}

/// A run of time offsets sharing one spatial offset.
struct Column {
    spatial: [i64; MAX_DIM],
    first: i64,
    weights: Vec<f64>,
}

const MAX_GAP: i64 = 3;

fn columns(layout: OffsetLayout, stencil: &SparseStencil) -> Vec<Column> {
    let side = layout.side();
    let r = layout.m as i64 - 1;
    let mut cols: Vec<Column> = Vec::new();
    let mut current: Option<(usize, Column)> = None;
    for (&o, &w) in stencil.offsets.iter().zip(&stencil.weights) {
        let o = o as usize;
        let group = o / side;
        let kt = (o % side) as i64 - r;
        if let Some((g, col)) = current.as_mut() {
            let last = col.first + col.weights.len() as i64 - 1;
            if *g == group && kt - last <= MAX_GAP + 1 {
                col.weights.resize((kt - last - 1) as usize + col.weights.len(), 0.0);
                col.weights.push(w);
                continue;
            }
        }
        if let Some((_, col)) = current.take() {
            cols.push(col);
        }
        let k = layout.decode(o);
        let mut spatial = [0; MAX_DIM];
        spatial[..layout.n].copy_from_slice(&k[..layout.n]);
        current = Some((
            group,
            Column {
                spatial,
                first: kt,
                weights: vec![w],
            },
        ));
    }
    if let Some((_, col)) = current {
        cols.push(col);
    }
    cols
}

fn row_axes(spec: &GridSpec, mut row: usize) -> [i64; MAX_DIM] {
    let mut axes = [0; MAX_DIM];
    for axis in (0..spec.n).rev() {
        axes[axis] = (row % spec.m) as i64;
        row /= spec.m;
    }
    axes
}

fn source_row(spec: &GridSpec, row: &[i64; MAX_DIM], shift: &[i64; MAX_DIM]) -> Option<usize> {
    let m = spec.m as i64;
    let mut idx = 0usize;
    for axis in 0..spec.n {
        let c = row[axis] - shift[axis];
        if !(0..m).contains(&c) {
            return None;
        }
        idx = idx * spec.m + c as usize;
    }
    Some(idx)
}

/// Convolve `values` (laid out per `spec`) with `stencil` over the whole grid.
pub fn convolve(spec: &GridSpec, stencil: &SparseStencil, values: &[f64]) -> Vec<f64> {
    let m = spec.m;
    let mut out = vec![0.0; spec.len()];
    if stencil.is_empty() {
        return out;
    }
    let cols = columns(OffsetLayout::new(spec), stencil);
    // rows padded by m - 1 zeros on both sides so every time shift stays in bounds
    let pad = m - 1;
    let width = m + 2 * pad;
    let mut padded = vec![0.0; spec.rows() * width];
    for (dst, src) in padded.chunks_mut(width).zip(values.chunks(m)) {
        dst[pad..pad + m].copy_from_slice(src);
    }
    out.par_chunks_mut(m).enumerate().for_each(|(row, dst)| {
        let axes = row_axes(spec, row);
        for col in &cols {
            if let Some(src_row) = source_row(spec, &axes, &col.spatial) {
                accumulate(dst, &padded[src_row * width..(src_row + 1) * width], col);
            }
        }
    });
    out
}

#[inline(always)]
fn accumulate_body(dst: &mut [f64], src: &[f64], col: &Column) {
    let m = dst.len() as i64;
    let pad = m - 1;
    let mut blocks = col.weights.chunks_exact(4);
    let mut shift = col.first;
    for w in &mut blocks {
        let lo = shift.max(0) as usize;
        let hi = m.min(m + shift + 3) as usize;
        if lo < hi {
            let base = (pad + lo as i64 - shift) as usize;
            let x0 = &src[base..base + hi - lo];
            let x1 = &src[base - 1..base - 1 + hi - lo];
            let x2 = &src[base - 2..base - 2 + hi - lo];
            let x3 = &src[base - 3..base - 3 + hi - lo];
            for ((((o, a), b), c), d) in dst[lo..hi].iter_mut().zip(x0).zip(x1).zip(x2).zip(x3) {
                *o += w[0] * a + w[1] * b + w[2] * c + w[3] * d;
            }
        }
        shift += 4;
    }
    for &w in blocks.remainder() {
        let lo = shift.max(0) as usize;
        let hi = m.min(m + shift) as usize;
        if lo < hi {
            let base = (pad + lo as i64 - shift) as usize;
            for (o, &x) in dst[lo..hi].iter_mut().zip(&src[base..base + hi - lo]) {
                *o += w * x;
            }
        }
        shift += 1;
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn accumulate_avx2(dst: &mut [f64], src: &[f64], col: &Column) {
    accumulate_body(dst, src, col)
}

/// `dst[t] += sum_d w_d src[t - shift_d]` against a zero-padded source row.
fn accumulate(dst: &mut [f64], src: &[f64], col: &Column) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { accumulate_avx2(dst, src, col) };
    }
    accumulate_body(dst, src, col)
}

/// Convolution evaluated at the single node `idx`.
pub fn convolve_at(spec: &GridSpec, stencil: &SparseStencil, values: &[f64], idx: usize) -> f64 {
    let layout = OffsetLayout::new(spec);
    let at = spec.unravel(idx);
    let m = spec.m as i64;
    let mut acc = 0.0;
    'entries: for (&o, &w) in stencil.offsets.iter().zip(&stencil.weights) {
        let k = layout.decode(o as usize);
        let mut src = 0usize;
        for axis in 0..=spec.n {
            let c = at[axis] as i64 - k[axis];
            if !(0..m).contains(&c) {
                continue 'entries;
            }
            src = src * spec.m + c as usize;
        }
        acc += w * values[src];
    }
    acc
}
