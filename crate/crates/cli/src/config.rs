//! Run configuration: `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use conefrac::{ExponentPair, FieldKind, GridSpec, KernelParams, QuadratureOptions};

/// Experiments the binary can run.
#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Apply the truncated operator to a field; writes output.bin and output.csv.
    Apply(Flags),
    /// Fit the dilation exponent of ||I f_lambda||_q / ||f_lambda||_p.
    Scaling(Flags),
    /// Pointwise Hedberg-type bound and per-cell decay around rho_ell.
    Hedberg(Flags),
    /// Check that the cone masses theta_ell sum to at most one.
    ThetaSum(Flags),
    /// Decay of the cross terms J(h) between levels h apart.
    OrthoDecay(Flags),
    /// Monte Carlo cell volumes, or the translated-cell intersection bound.
    ConeMeasure(Flags),
    /// Norm ratios over the bundled fields and several grid sizes.
    Survey(Flags),
}

impl Command {
    pub fn split(self) -> (Experiment, Flags) {
        match self {
            Self::Apply(f) => (Experiment::Apply, f),
            Self::Scaling(f) => (Experiment::Scaling, f),
            Self::Hedberg(f) => (Experiment::Hedberg, f),
            Self::ThetaSum(f) => (Experiment::ThetaSum, f),
            Self::OrthoDecay(f) => (Experiment::OrthoDecay, f),
            Self::ConeMeasure(f) => (Experiment::ConeMeasure, f),
            Self::Survey(f) => (Experiment::Survey, f),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Apply,
    Scaling,
    Hedberg,
    ThetaSum,
    OrthoDecay,
    ConeMeasure,
    Survey,
}

/// What `cone-measure` estimates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MeasureMode {
    Cells,
    Intersection,
}

/// Flags shared by every subcommand. Each one can also be given as
/// `key = value` in the file passed to `--config`; flags win.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// Configuration file with `key = value` lines using the flag names below
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Spatial dimension, 1..=3 [default: 1]
    #[arg(long)]
    pub n: Option<usize>,
    /// Kernel order, 0 < alpha < n [default: n/2]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Lebesgue exponent of the input, p >= 1 [default: 2 for theta-sum,
    /// from q-int for ortho-decay, 1.5 otherwise]
    #[arg(long)]
    pub p: Option<f64>,
    /// Lebesgue exponent of the output; `inf` allowed for scaling
    /// [default: 1/q = 1/p - alpha/n]
    #[arg(long)]
    pub q: Option<f64>,
    /// Integer exponent of the cross terms, >= 2 [default: 3 for
    /// ortho-decay, 2 for the intersection bound]
    #[arg(long = "q-int")]
    pub q_int: Option<u32>,
    /// Grid nodes per axis, >= 2 [default: 64]
    #[arg(long = "grid-m")]
    pub grid_m: Option<usize>,
    /// Spatial half-width of the grid box, > 0 [default: 2]
    #[arg(long = "grid-L")]
    pub grid_l: Option<f64>,
    /// Temporal half-width of the grid box, > 0 [default: 2]
    #[arg(long = "grid-T")]
    pub grid_t: Option<f64>,
    /// Eccentricity cutoff eta >= 1 [default: 12]
    #[arg(long)]
    pub eta: Option<u32>,
    /// Smallest dyadic scale [default: jmax - 12]
    #[arg(long, allow_hyphen_values = true)]
    pub jmin: Option<i32>,
    /// Largest dyadic scale [default: ceil(log2) of the grid reach]
    #[arg(long, allow_hyphen_values = true)]
    pub jmax: Option<i32>,
    /// Seed of the Monte Carlo experiments [default: 2024]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory, created if missing [default: conefrac-out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// gaussian, ball, cone-bump, checkerboard or a field FILE (binary or
    /// CSV); survey takes a comma-separated list of names [default:
    /// gaussian, all four for survey]
    #[arg(long)]
    pub field: Option<String>,
    /// Dilation factors for scaling, at least two distinct [default: 1,2,4]
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Level gaps for ortho-decay, each <= eta [default: 0..=min(6, eta)]
    #[arg(long)]
    pub gaps: Option<String>,
    /// Grid sizes for survey [default: 32,64]
    #[arg(long = "grid-sizes")]
    pub grid_sizes: Option<String>,
    /// Level for apply; the full operator when omitted
    #[arg(long)]
    pub level: Option<u32>,
    /// cone-measure mode [default: cells]
    #[arg(long, value_enum)]
    pub mode: Option<MeasureMode>,
    /// Monte Carlo samples per estimate [default: 262144]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Random cells for cone-measure cells mode [default: 10]
    #[arg(long)]
    pub cells: Option<usize>,
    /// Test and calibration configurations for the intersection bound [default: 20]
    #[arg(long)]
    pub configs: Option<usize>,
}

/// Keys accepted in configuration files.
pub const KEYS: [&str; 22] = [
    "n", "alpha", "p", "q", "q-int", "grid-m", "grid-L", "grid-T", "eta", "jmin", "jmax", "seed", "out", "field",
    "lambdas", "gaps", "grid-sizes", "level", "mode", "samples", "cells", "configs",
];

/// Where the input field comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSource {
    Named(FieldKind),
    File(PathBuf),
}

/// A fully validated run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: KernelParams,
    pub p: f64,
    pub q: f64,
    pub q_derived: bool,
    pub q_int: u32,
    pub grid: GridSpec,
    pub opts: QuadratureOptions,
    pub seed: u64,
    pub out: PathBuf,
    pub fields: Vec<FieldSource>,
    pub lambdas: Vec<f64>,
    pub gaps: Vec<u32>,
    pub grid_sizes: Vec<usize>,
    pub level: Option<u32>,
    pub mode: MeasureMode,
    pub samples: usize,
    pub cells: usize,
    pub configs: usize,
}

/// Parse `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", lineno + 1))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            bail!("line {}: unknown key `{key}`", lineno + 1);
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config_text(&text).with_context(|| format!("in config file {}", path.display()))
}

impl Flags {
    /// Flag values as strings, keyed like the config file.
    fn to_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("n", self.n.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("p", self.p.map(|v| v.to_string()));
        put("q", self.q.map(|v| v.to_string()));
        put("q-int", self.q_int.map(|v| v.to_string()));
        put("grid-m", self.grid_m.map(|v| v.to_string()));
        put("grid-L", self.grid_l.map(|v| v.to_string()));
        put("grid-T", self.grid_t.map(|v| v.to_string()));
        put("eta", self.eta.map(|v| v.to_string()));
        put("jmin", self.jmin.map(|v| v.to_string()));
        put("jmax", self.jmax.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out", self.out.as_ref().map(|v| v.display().to_string()));
        put("field", self.field.clone());
        put("lambdas", self.lambdas.clone());
        put("gaps", self.gaps.clone());
        put("grid-sizes", self.grid_sizes.clone());
        put("level", self.level.map(|v| v.to_string()));
        put(
            "mode",
            self.mode.map(|m| match m {
                MeasureMode::Cells => "cells".to_string(),
                MeasureMode::Intersection => "intersection".to_string(),
            }),
        );
        put("samples", self.samples.map(|v| v.to_string()));
        put("cells", self.cells.map(|v| v.to_string()));
        put("configs", self.configs.map(|v| v.to_string()));
        map
    }
}

struct Settings(BTreeMap<String, String>);

impl Settings {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("invalid value `{v}` for `{key}`: {e}")))
            .transpose()
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|e| anyhow!("invalid entry `{item}` in `{key}`: {e}"))
                    })
                    .collect()
            })
            .transpose()
    }
}

fn field_source(text: &str) -> FieldSource {
    match FieldKind::from_name(text) {
        Ok(kind) => FieldSource::Named(kind),
        Err(_) => FieldSource::File(PathBuf::from(text)),
    }
}

/// Merge the config file (if any) with the flags and validate everything the
/// chosen experiment needs.
pub fn parse_config(experiment: Experiment, flags: &Flags) -> Result<RunConfig> {
    let mut map = match &flags.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    map.extend(flags.to_map());
    build(experiment, Settings(map))
}

fn build(experiment: Experiment, s: Settings) -> Result<RunConfig> {
    let n: usize = s.get("n")?.unwrap_or(1);
    if !(1..=3).contains(&n) {
        bail!("n = {n} must lie in 1..=3");
    }
    let alpha: f64 = s.get("alpha")?.unwrap_or(0.5 * n as f64);
    if !(alpha > 0.0 && alpha < n as f64) {
        bail!("alpha = {alpha} must satisfy 0 < alpha < n = {n}");
    }
    let params = KernelParams::new(n, alpha)?;
    let mode: MeasureMode = match s.0.get("mode").map(String::as_str) {
        None | Some("cells") => MeasureMode::Cells,
        Some("intersection") => MeasureMode::Intersection,
        Some(other) => bail!("invalid value `{other}` for `mode`: expected cells or intersection"),
    };
    let default_q_int = if experiment == Experiment::ConeMeasure { 2 } else { 3 };
    let q_int: u32 = s.get("q-int")?.unwrap_or(default_q_int);
    if q_int < 2 {
        bail!("q-int = {q_int} must be at least 2");
    }

    let explicit_p: Option<f64> = s.get("p")?;
    let explicit_q: Option<f64> = s.get("q")?;
    let line = alpha / n as f64;
    let (p, q, q_derived) = match experiment {
        Experiment::OrthoDecay => {
            let p = explicit_p.unwrap_or(1.0 / (line + 1.0 / q_int as f64));
            if ((1.0 / p - 1.0 / q_int as f64) - line).abs() > 1e-9 {
                bail!("ortho-decay needs alpha/n = 1/p - 1/q-int; p = {p} gives {}", 1.0 / p - 1.0 / q_int as f64);
            }
            (p, q_int as f64, false)
        }
        Experiment::ThetaSum | Experiment::ConeMeasure => (explicit_p.unwrap_or(2.0), explicit_q.unwrap_or(f64::INFINITY), false),
        Experiment::Apply => {
            let p = explicit_p.unwrap_or(1.5);
            match (explicit_q, ExponentPair::from_line(alpha, n, p)) {
                (Some(q), _) => (p, q, false),
                (None, Ok(pair)) => (p, pair.q, true),
                (None, Err(_)) => (p, f64::INFINITY, false),
            }
        }
        _ => {
            let p = explicit_p.unwrap_or(1.5);
            if !(p >= 1.0) {
                bail!("p = {p} must be at least 1");
            }
            match explicit_q {
                Some(q) => {
                    if !(q >= 1.0) {
                        bail!("q = {q} must be at least 1");
                    }
                    (p, q, false)
                }
                None => {
                    let pair = ExponentPair::from_line(alpha, n, p)?;
                    (p, pair.q, true)
                }
            }
        }
    };
    if !(p >= 1.0) {
        bail!("p = {p} must be at least 1");
    }
    if matches!(experiment, Experiment::Hedberg | Experiment::Survey) {
        let pair = ExponentPair::new(p, q)?;
        if !pair.on_line(alpha, n) {
            bail!("{experiment:?} needs alpha/n = 1/p - 1/q; got 1/p - 1/q = {}", 1.0 / p - 1.0 / q);
        }
    }

    let m: usize = s.get("grid-m")?.unwrap_or(64);
    let half_width: f64 = s.get("grid-L")?.unwrap_or(2.0);
    let half_time: f64 = s.get("grid-T")?.unwrap_or(2.0);
    let grid = GridSpec::new(n, half_width, half_time, m)?;
    let eta: u32 = s.get("eta")?.unwrap_or(12);
    if eta < 1 {
        bail!("eta = {eta} must be at least 1");
    }
    let opts = QuadratureOptions {
        j_min: s.get("jmin")?,
        j_max: s.get("jmax")?,
        ell_max: eta,
        ..Default::default()
    };
    opts.validate()?;

    let fields = match (experiment, s.0.get("field")) {
        (Experiment::Survey, None) => FieldKind::ALL.iter().map(|&k| FieldSource::Named(k)).collect(),
        (Experiment::Survey, Some(list)) => list
            .split(',')
            .map(|name| Ok(FieldSource::Named(FieldKind::from_name(name.trim())?)))
            .collect::<Result<Vec<_>>>()?,
        (_, None) => vec![FieldSource::Named(FieldKind::Gaussian)],
        (_, Some(text)) => vec![field_source(text)],
    };
    let lambdas: Vec<f64> = s.list("lambdas")?.unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
    if experiment == Experiment::Scaling {
        let mut distinct = lambdas.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 2 || lambdas.iter().any(|&l| !(l > 0.0)) {
            bail!("lambdas must hold at least two distinct positive factors");
        }
    }
    let gaps: Vec<u32> = s.list("gaps")?.unwrap_or_else(|| (0..=eta.min(6)).collect());
    if experiment == Experiment::OrthoDecay {
        if gaps.len() < 2 {
            bail!("gaps must hold at least two level gaps");
        }
        if let Some(h) = gaps.iter().find(|&&h| h > eta) {
            bail!("gap {h} exceeds eta = {eta}");
        }
    }
    let grid_sizes: Vec<usize> = s.list("grid-sizes")?.unwrap_or_else(|| vec![32, 64]);
    if experiment == Experiment::Survey && (opts.j_min.is_some() || opts.j_max.is_some()) {
        bail!("survey derives the dyadic window from each grid; drop jmin/jmax");
    }
    let level: Option<u32> = s.get("level")?;
    if let Some(l) = level {
        if l > eta {
            bail!("level {l} exceeds eta = {eta}");
        }
    }
    let samples: usize = s.get("samples")?.unwrap_or(1 << 18);
    let cells: usize = s.get("cells")?.unwrap_or(10);
    let configs: usize = s.get("configs")?.unwrap_or(20);
    if samples == 0 || cells == 0 || configs == 0 {
        bail!("samples, cells and configs must be positive");
    }
    Ok(RunConfig {
        experiment,
        params,
        p,
        q,
        q_derived,
        q_int,
        grid,
        opts,
        seed: s.get("seed")?.unwrap_or(2024),
        out: s.get::<PathBuf>("out")?.unwrap_or_else(|| PathBuf::from("conefrac-out")),
        fields,
        lambdas,
        gaps,
        grid_sizes,
        level,
        mode,
        samples,
        cells,
        configs,
    })
}
