//! Non-negative functions sampled on uniform tensor grids in `R^n x R`.
//!
//! Node `i` of a spatial axis sits at `-L + (i + 1/2) h` with `h = 2L/m`;
//! the time axis uses `T` in place of `L`. Values are stored with the time
//! index varying fastest.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cone_geometry::{pow2, CellIndex, ConePoint, MAX_DIM};
use crate::error::{invalid, Error, Result};

const MAGIC: &[u8; 4] = b"CFLD";
const FORMAT_VERSION: u32 = 1;

/// Uniform grid on `[-L, L]^n x [-T, T]` with `m` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "T")]
    pub half_time: f64,
    pub m: usize,
}

impl GridSpec {
    pub fn new(n: usize, half_width: f64, half_time: f64, m: usize) -> Result<Self> {
        let spec = Self {
            n,
            half_width,
            half_time,
            m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.n) {
            return Err(Error::UnsupportedDimension(self.n));
        }
        if self.m < 8 {
            return Err(invalid(format!("grid needs m >= 8 points per axis, got {}", self.m)));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid("spatial half-width L must be positive"));
        }
        if !(self.half_time > 0.0 && self.half_time.is_finite()) {
            return Err(invalid("time half-width T must be positive"));
        }
        Ok(())
    }

    /// Spatial spacing `2L/m`.
    pub fn hx(&self) -> f64 {
        2.0 * self.half_width / self.m as f64
    }

    /// Time spacing `2T/m`.
    pub fn ht(&self) -> f64 {
        2.0 * self.half_time / self.m as f64
    }

    /// Volume `h_x^n h_t` of one grid box.
    pub fn cell_volume(&self) -> f64 {
        self.hx().powi(self.n as i32) * self.ht()
    }

    /// Number of nodes, `m^{n+1}`.
    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32 + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of time rows, `m^n`.
    pub fn rows(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.hx()
    }

    pub fn t_coord(&self, k: usize) -> f64 {
        -self.half_time + (k as f64 + 0.5) * self.ht()
    }

    /// Split a flat index into `n + 1` axis indices (time last).
    pub fn unravel(&self, mut idx: usize) -> [usize; MAX_DIM + 1] {
        let mut out = [0; MAX_DIM + 1];
        for axis in (0..=self.n).rev() {
            out[axis] = idx % self.m;
            idx /= self.m;
        }
        out
    }

    /// Flat index of `n + 1` axis indices (time last).
    pub fn ravel(&self, axes: &[usize]) -> usize {
        debug_assert_eq!(axes.len(), self.n + 1);
        axes.iter().fold(0, |acc, &a| acc * self.m + a)
    }

    /// Position of the node with the given flat index.
    pub fn point(&self, idx: usize) -> ConePoint {
        let axes = self.unravel(idx);
        let mut y = [0.0; MAX_DIM];
        for (c, &a) in y.iter_mut().zip(&axes[..self.n]) {
            *c = self.x_coord(a);
        }
        ConePoint::new(&y[..self.n], self.t_coord(axes[self.n]))
    }

    /// Flat index of the node nearest to `p`, if `p` lies in the box.
    pub fn nearest(&self, p: &ConePoint) -> Option<usize> {
        let locate = |x: f64, half: f64, h: f64| -> Option<usize> {
            let i = ((x + half) / h).floor();
            (i >= 0.0 && i < self.m as f64).then_some(i as usize)
        };
        let mut axes = [0; MAX_DIM + 1];
        for (a, &c) in axes.iter_mut().zip(p.y()) {
            *a = locate(c, self.half_width, self.hx())?;
        }
        axes[self.n] = locate(p.s(), self.half_time, self.ht())?;
        Some(self.ravel(&axes[..=self.n]))
    }

    /// Same node count on the box shrunk by `lambda`.
    pub fn dilated(&self, lambda: f64) -> GridSpec {
        GridSpec {
            half_width: self.half_width / lambda,
            half_time: self.half_time / lambda,
            ..*self
        }
    }

    /// Largest offset reachable between two nodes, `(m-1)(h_t + h_x sqrt(n))`.
    pub fn reach(&self) -> f64 {
        (self.m - 1) as f64 * (self.ht() + self.hx() * (self.n as f64).sqrt())
    }
}

/// A finite, non-negative function sampled on a [`GridSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid(format!("field values must be finite and >= 0, found {bad}")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    /// Sample `f` at every node. Panics if `f` returns a negative or
    /// non-finite value.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&ConePoint) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|i| {
                let v = f(&spec.point(i));
                assert!(v.is_finite() && v >= 0.0, "sampled value {v} is invalid");
                v
            })
            .collect();
        Self { spec, values }
    }

    /// Wraps operator output, clamping rounding noise below zero.
    pub(crate) fn from_output(spec: GridSpec, mut values: Vec<f64>) -> Self {
        values.iter_mut().for_each(|v| *v = v.max(0.0));
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> SampledField {
        assert!(c >= 0.0 && c.is_finite());
        Self {
            spec: self.spec,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Pointwise power `f^p`.
    pub fn powf(&self, p: f64) -> SampledField {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|v| v.powf(p)).collect(),
        }
    }

    /// Swap the spatial and time axes of an `n = 1` field.
    pub fn transposed(&self) -> Result<SampledField> {
        if self.spec.n != 1 {
            return Err(Error::UnsupportedDimension(self.spec.n));
        }
        let m = self.spec.m;
        let mut values = vec![0.0; self.values.len()];
        for i in 0..m {
            for k in 0..m {
                values[k * m + i] = self.values[i * m + k];
            }
        }
        let spec = GridSpec {
            half_width: self.spec.half_time,
            half_time: self.spec.half_width,
            ..self.spec
        };
        Ok(Self { spec, values })
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(self, p)
    }

    /// Write the flat binary format.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.spec.n as u32).to_le_bytes())?;
        w.write_all(&(self.spec.m as u64).to_le_bytes())?;
        w.write_all(&self.spec.half_width.to_le_bytes())?;
        w.write_all(&self.spec.half_time.to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = read_u32(&mut r)? as usize;
        let m = read_u64(&mut r)? as usize;
        let half_width = f64::from_bits(read_u64(&mut r)?);
        let half_time = f64::from_bits(read_u64(&mut r)?);
        let count = read_u64(&mut r)? as usize;
        let spec = GridSpec::new(n, half_width, half_time, m)?;
        if count != spec.len() {
            return Err(Error::Format(format!("value count {count} does not match the grid")));
        }
        let values = (0..count)
            .map(|_| read_u64(&mut r).map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec, values)
    }

    /// Write `# n= m= L= T=` followed by `index..., value` rows.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let s = &self.spec;
        writeln!(
            w,
            "# n={} m={} L={:?} T={:?}",
            s.n, s.m, s.half_width, s.half_time
        )?;
        let mut line = String::new();
        for (idx, v) in self.values.iter().enumerate() {
            line.clear();
            for a in &s.unravel(idx)[..=s.n] {
                write!(line, "{a},").expect("writing to a String cannot fail");
            }
            writeln!(w, "{line}{v:?}")?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty input".into()))??;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let mut n = None;
        let mut m = None;
        let mut l = None;
        let mut t = None;
        for item in header.split_whitespace() {
            let (key, val) = item
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad header item `{item}`")))?;
            let bad = |_| Error::Format(format!("bad header value `{item}`"));
            match key {
                "n" => n = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "m" => m = Some(val.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "L" => l = Some(val.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "T" => t = Some(val.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                _ => return Err(Error::Format(format!("unknown header key `{key}`"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header lacks `{k}`"));
        let spec = GridSpec::new(
            n.ok_or_else(|| missing("n"))?,
            l.ok_or_else(|| missing("L"))?,
            t.ok_or_else(|| missing("T"))?,
            m.ok_or_else(|| missing("m"))?,
        )?;
        let mut values = vec![f64::NAN; spec.len()];
        let mut seen = 0usize;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != spec.n + 2 {
                return Err(Error::Format(format!("row `{line}` has the wrong arity")));
            }
            let axes = fields[..=spec.n]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(e.to_string()))?;
            if axes.iter().any(|&a| a >= spec.m) {
                return Err(Error::Format(format!("row `{line}` is out of range")));
            }
            let v: f64 = fields[spec.n + 1]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| Error::Format(e.to_string()))?;
            values[spec.ravel(&axes)] = v;
            seen += 1;
        }
        if seen != spec.len() {
            return Err(Error::Format(format!("expected {} rows, got {seen}", spec.len())));
        }
        Self::new(spec, values)
    }

    /// Load a field, choosing the format from the file contents.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC) {
            Self::read_binary(bytes.as_slice())
        } else {
            Self::read_csv(bytes.as_slice())
        }
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Exponents `1 < p < q < infinity`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    pub p: f64,
    pub q: f64,
}

impl ExponentPair {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p > 1.0 && q > p && q.is_finite()) {
            return Err(invalid(format!("exponents must satisfy 1 < p < q < inf (p = {p}, q = {q})")));
        }
        Ok(Self { p, q })
    }

    /// The pair with `alpha/n = 1/p - 1/q`.
    pub fn from_line(alpha: f64, n: usize, p: f64) -> Result<Self> {
        let inv_q = 1.0 / p - alpha / n as f64;
        if !(inv_q > 0.0) {
            return Err(invalid(format!(
                "1/p - alpha/n = {inv_q} must be positive for a finite q (p = {p}, alpha = {alpha}, n = {n})"
            )));
        }
        Self::new(p, 1.0 / inv_q)
    }

    pub fn on_line(&self, alpha: f64, n: usize) -> bool {
        (alpha / n as f64 - (1.0 / self.p - 1.0 / self.q)).abs() < 1e-12
    }
}

/// Midpoint Riemann approximation of `||f||_p`.
pub fn lp_norm(f: &SampledField, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm requires p >= 1");
    let sum: f64 = if p == 1.0 {
        f.values.iter().sum()
    } else {
        f.values.iter().map(|v| v.powf(p)).sum()
    };
    (sum * f.spec.cell_volume()).powf(1.0 / p)
}

/// `f_lambda(x, t) = f(lambda x, lambda t)` on the grid shrunk by `lambda`.
pub fn dilate(f: &SampledField, lambda: f64) -> Result<SampledField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("dilation factor must be positive, got {lambda}")));
    }
    let target = f.spec.dilated(lambda);
    let values = (0..target.len())
        .map(|i| {
            let p = target.point(i).scaled(lambda);
            f.spec.nearest(&p).map_or(0.0, |k| f.values[k])
        })
        .collect();
    Ok(SampledField {
        spec: target,
        values,
    })
}

/// Nearest-node resampling onto another grid; zero outside the source box.
pub fn resample_nearest(f: &SampledField, target: GridSpec) -> Result<SampledField> {
    target.validate()?;
    if target.n != f.spec.n {
        return Err(Error::GridMismatch("dimensions differ".into()));
    }
    let values = (0..target.len())
        .map(|i| f.spec.nearest(&target.point(i)).map_or(0.0, |k| f.values[k]))
        .collect();
    Ok(SampledField {
        spec: target,
        values,
    })
}

/// Names of the bundled test functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    Gaussian,
    BallIndicator,
    ConeBump,
    Checkerboard,
}

impl FieldKind {
    pub const ALL: [FieldKind; 4] = [
        FieldKind::Gaussian,
        FieldKind::BallIndicator,
        FieldKind::ConeBump,
        FieldKind::Checkerboard,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Self::Gaussian),
            "ball" | "ball_indicator" | "ball-indicator" => Ok(Self::BallIndicator),
            "cone-bump" | "cone_bump" => Ok(Self::ConeBump),
            "checkerboard" => Ok(Self::Checkerboard),
            other => Err(Error::UnknownField(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::BallIndicator => "ball",
            Self::ConeBump => "cone-bump",
            Self::Checkerboard => "checkerboard",
        }
    }
}

/// Parameters of the bundled test functions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldParams {
    /// Gaussian standard deviation, ball radius, checkerboard half-width.
    pub scale: f64,
    /// Cell that `cone_bump` is placed in, relative to the origin.
    pub cell: CellIndex,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self {
            scale: 1.0,
            cell: CellIndex::new(2, 0),
        }
    }
}

/// Centre and radius of the bump placed well inside `cell`.
pub fn cone_bump_geometry(n: usize, cell: CellIndex) -> (ConePoint, f64) {
    let unit = pow2(cell.j);
    let (u, v, margin) = if cell.ell == 0 {
        (1.75 * unit, 1.25 * unit, 0.25 * unit)
    } else {
        let vunit = pow2(cell.j - cell.ell as i32);
        (1.5 * unit, 1.5 * vunit, 0.5 * vunit)
    };
    let mut y = [0.0; MAX_DIM];
    y[0] = 0.5 * (u - v);
    let center = ConePoint::new(&y[..n], 0.5 * (u + v));
    // u and v are sqrt(2)-Lipschitz in the Euclidean distance
    (center, 0.8 * margin / std::f64::consts::SQRT_2)
}

/// Build one of the bundled test functions on `spec`.
pub fn make_test_field(kind: FieldKind, spec: GridSpec, params: &FieldParams) -> Result<SampledField> {
    spec.validate()?;
    if !(params.scale > 0.0 && params.scale.is_finite()) {
        return Err(invalid("field scale must be positive"));
    }
    let s = params.scale;
    let field = match kind {
        FieldKind::Gaussian => SampledField::from_fn(spec, |p| {
            let r2 = p.radius().powi(2) + p.s() * p.s();
            (-0.5 * r2 / (s * s)).exp()
        }),
        FieldKind::BallIndicator => SampledField::from_fn(spec, |p| {
            let r2 = p.radius().powi(2) + p.s() * p.s();
            if r2 <= s * s {
                1.0
            } else {
                0.0
            }
        }),
        FieldKind::ConeBump => {
            let (center, radius) = cone_bump_geometry(spec.n, params.cell);
            SampledField::from_fn(spec, |p| {
                let d = p.relative_to(&center);
                let z2 = (d.radius().powi(2) + d.s() * d.s()) / (radius * radius);
                if z2 < 1.0 {
                    (1.0 - z2).powi(2)
                } else {
                    0.0
                }
            })
        }
        FieldKind::Checkerboard => {
            let tile = s / 4.0;
            SampledField::from_fn(spec, |p| {
                let coords = p.y().iter().copied().chain(std::iter::once(p.s()));
                let mut parity = 0i64;
                for c in coords {
                    if c.abs() > s {
                        return 0.0;
                    }
                    parity += (c / tile).floor() as i64;
                }
                if parity.rem_euclid(2) == 0 {
                    1.0
                } else {
                    0.25
                }
            })
        }
    };
    Ok(field)
}
