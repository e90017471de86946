//! Experiment dispatch and artifact output.

use std::fs::File;
use std::io::BufWriter;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use conefrac::verify::norm;
use conefrac::{
    cell_volume_check, hedberg_check, intersection_bound_check, make_test_field, norm_ratio_survey, ortho_decay,
    scaling_experiment, theta_sum_check, ConeOperator, ConePoint, ExperimentReport, FieldKind, FieldParams,
    IntersectionConfig, OrthoConfig, SampledField,
};

use crate::config::{Experiment, FieldSource, MeasureMode, RunConfig};

fn load_field(cfg: &RunConfig, source: &FieldSource) -> Result<SampledField> {
    let f = match source {
        FieldSource::Named(kind) => make_test_field(*kind, cfg.grid, &FieldParams::default())?,
        FieldSource::File(path) => {
            SampledField::load(path).with_context(|| format!("cannot load field {}", path.display()))?
        }
    };
    if f.spec().n != cfg.params.n {
        bail!("the field has n = {} but the kernel has n = {}", f.spec().n, cfg.params.n);
    }
    Ok(f)
}

fn field_name(source: &FieldSource) -> String {
    match source {
        FieldSource::Named(kind) => kind.name().to_string(),
        FieldSource::File(path) => path.display().to_string(),
    }
}

/// Lattice of sample points with spacing a quarter of the box, thinned in higher dimensions.
fn sample_points(cfg: &RunConfig) -> Vec<ConePoint> {
    let per_axis: i32 = match cfg.params.n {
        1 => 3,
        2 => 2,
        _ => 1,
    };
    let (hx, ht) = (cfg.grid.half_width / 4.0, cfg.grid.half_time / 4.0);
    let n = cfg.params.n;
    let side = (2 * per_axis + 1) as usize;
    let total = side.pow(n as u32 + 1);
    (0..total)
        .map(|mut k| {
            let mut coords = Vec::with_capacity(n + 1);
            for _ in 0..=n {
                coords.push((k % side) as i32 - per_axis);
                k /= side;
            }
            let y: Vec<f64> = coords[..n].iter().map(|&c| c as f64 * hx).collect();
            ConePoint::new(&y, coords[n] as f64 * ht)
        })
        .collect()
}

fn apply(cfg: &RunConfig) -> Result<(ExperimentReport, SampledField)> {
    let start = Instant::now();
    let source = &cfg.fields[0];
    let f = load_field(cfg, source)?;
    let op = ConeOperator::new(f.spec(), &cfg.params, &cfg.opts)?;
    let out = match cfg.level {
        Some(ell) => op.apply_partial(&f, ell)?,
        None => op.apply_full(&f)?,
    };
    let n = cfg.params.n;
    let mut columns: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    columns.extend(["t".to_string(), "f".to_string(), "if".to_string()]);
    let column_refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut report = ExperimentReport::new("apply", &column_refs);
    report.param("n", n);
    report.param("alpha", cfg.params.alpha);
    report.param("p", cfg.p);
    report.param("q", if cfg.q.is_finite() { Some(cfg.q) } else { None });
    report.param("q_derived", cfg.q_derived);
    report.param("field", field_name(source));
    report.param("grid", f.spec());
    report.param("quadrature", cfg.opts);
    report.param("window", op.window());
    report.param("level", cfg.level);
    let diag = op.diagnostics();
    report.metric("eccentricity_tail", diag.eccentricity_tail)?;
    report.metric("apex_tail", diag.apex_tail)?;
    report.metric("unresolved_cells", diag.unresolved_cells.len() as f64)?;
    let nf = norm(&f, cfg.p);
    let nif = norm(&out, cfg.q);
    report.metric("norm_f_p", nf)?;
    report.metric("norm_if_q", nif)?;
    report.metric("output_max", out.max())?;
    if nf > 0.0 {
        report.metric("ratio", nif / nf)?;
    }
    for idx in 0..f.spec().len() {
        let p = f.spec().point(idx);
        let mut row: Vec<String> = p.y().iter().map(|c| c.to_string()).collect();
        row.push(p.s().to_string());
        row.push(f.values()[idx].to_string());
        row.push(out.values()[idx].to_string());
        report.rows.push(row);
    }
    report.runtime_s = start.elapsed().as_secs_f64();
    Ok((report, out))
}

/// Run the configured experiment; `apply` also returns its output field.
pub fn run(cfg: &RunConfig) -> Result<(ExperimentReport, Option<SampledField>)> {
    let field = || load_field(cfg, &cfg.fields[0]);
    let mut report = match cfg.experiment {
        Experiment::Apply => {
            let (report, out) = apply(cfg)?;
            return Ok((report, Some(out)));
        }
        Experiment::Scaling => scaling_experiment(&field()?, &cfg.params, cfg.p, cfg.q, &cfg.lambdas, &cfg.opts)?,
        Experiment::Hedberg => hedberg_check(&field()?, &cfg.params, cfg.p, cfg.q, &sample_points(cfg), &cfg.opts)?,
        Experiment::ThetaSum => theta_sum_check(&field()?, &cfg.params, cfg.p, &cfg.opts)?,
        Experiment::OrthoDecay => {
            let ortho = OrthoConfig::new(cfg.q_int, cfg.gaps.clone())?;
            ortho_decay(&field()?, &cfg.params, cfg.p, &ortho, &cfg.opts)?
        }
        Experiment::ConeMeasure => match cfg.mode {
            MeasureMode::Cells => cell_volume_check(cfg.params.n, cfg.cells, cfg.samples, cfg.seed)?,
            MeasureMode::Intersection => intersection_bound_check(&IntersectionConfig {
                n: cfg.params.n,
                q_int: cfg.q_int,
                configs: cfg.configs,
                calibration: cfg.configs,
                samples: cfg.samples,
                seed: cfg.seed,
            })?,
        },
        Experiment::Survey => {
            let kinds: Vec<FieldKind> = cfg
                .fields
                .iter()
                .map(|s| match s {
                    FieldSource::Named(k) => Ok(*k),
                    FieldSource::File(p) => bail!("survey takes field names, not files ({})", p.display()),
                })
                .collect::<Result<_>>()?;
            norm_ratio_survey(
                &kinds,
                &cfg.params,
                cfg.p,
                cfg.q,
                &cfg.grid_sizes,
                cfg.grid.half_width,
                cfg.grid.half_time,
                &cfg.opts,
            )?
        }
    };
    if matches!(cfg.experiment, Experiment::Scaling | Experiment::Hedberg | Experiment::ThetaSum | Experiment::OrthoDecay) {
        report.param("field", field_name(&cfg.fields[0]));
    }
    if cfg.q_derived {
        report.param("q", cfg.q);
        report.param("q_derived", true);
    }
    Ok((report, None))
}

/// Write `report.json`, `samples.csv` and, for `apply`, `output.bin` and `output.csv`.
pub fn write_artifacts(cfg: &RunConfig, report: &ExperimentReport, field: Option<&SampledField>) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).with_context(|| format!("cannot create {}", cfg.out.display()))?;
    std::fs::write(cfg.out.join("report.json"), report.to_json()? + "\n")?;
    report.write_csv(BufWriter::new(File::create(cfg.out.join("samples.csv"))?))?;
    if let Some(f) = field {
        f.write_binary(BufWriter::new(File::create(cfg.out.join("output.bin"))?))?;
        f.write_csv(BufWriter::new(File::create(cfg.out.join("output.csv"))?))?;
    }
    Ok(())
}
