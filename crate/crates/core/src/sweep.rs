//! Parallel sweeps over `(v, eta)` grids.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::build_densities;
use crate::energy::{
    decay_constants, energy_trace, fit_decay_rate_from, undamped_bounds, usual_energy,
};
use crate::error::{Error, Result};
use crate::field::FieldSolver;
use crate::model::{extend_initial_data, InitialData, Preset, StringParams};
use crate::spectral::compute_coefficients;
use crate::verify::{worst_bound_ratio, Numerics};

pub const CSV_HEADER: [&str; 9] = [
    "v",
    "eta",
    "theory_rate",
    "fitted_rate",
    "rel_rate_err",
    "envelope_ok",
    "M1",
    "M2",
    "runtime_s",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub v_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub length: f64,
    pub preset: Preset,
    pub numerics: Numerics,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.v_values.is_empty() || self.eta_values.is_empty() {
            return Err(Error::InvalidInput("sweep grids must be non-empty".into()));
        }
        for &v in &self.v_values {
            for &eta in &self.eta_values {
                StringParams::new(self.length, v, eta)?;
            }
        }
        self.numerics.validate()
    }

    /// `(v, eta)` cells in lexicographic order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        let mut cells: Vec<(f64, f64)> = self
            .v_values
            .iter()
            .flat_map(|&v| self.eta_values.iter().map(move |&eta| (v, eta)))
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v: f64,
    pub eta: f64,
    /// Infinite for `eta = 1`, where the string is at rest after `T_v`.
    pub theory_rate: f64,
    pub fitted_rate: Option<f64>,
    pub rel_rate_err: Option<f64>,
    pub envelope_ok: bool,
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub runtime_seconds: f64,
    /// Diagnostic text; not part of the CSV.
    pub detail: String,
}

impl SweepRow {
    /// Equality of every computed column, ignoring the runtime and detail.
    pub fn same_result(&self, other: &Self) -> bool {
        let bits = |x: f64| x.to_bits();
        let obits = |x: Option<f64>| x.map(f64::to_bits);
        bits(self.v) == bits(other.v)
            && bits(self.eta) == bits(other.eta)
            && bits(self.theory_rate) == bits(other.theory_rate)
            && obits(self.fitted_rate) == obits(other.fitted_rate)
            && obits(self.rel_rate_err) == obits(other.rel_rate_err)
            && self.envelope_ok == other.envelope_ok
            && obits(self.m1) == obits(other.m1)
            && obits(self.m2) == obits(other.m2)
    }

    fn failed(v: f64, eta: f64, theory_rate: f64, err: &Error) -> Self {
        Self {
            v,
            eta,
            theory_rate,
            fitted_rate: None,
            rel_rate_err: None,
            envelope_ok: false,
            m1: None,
            m2: None,
            runtime_seconds: 0.0,
            detail: format!("error: {err}"),
        }
    }
}

/// Runs every cell on a pool of `workers` threads (default: all cores).
/// Rows come back in lexicographic `(v, eta)` order.
pub fn run_sweep(spec: &SweepSpec, workers: Option<usize>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidInput("worker count must be >= 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let cells = spec.cells();
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&(v, eta)| run_cell(spec, v, eta))
            .collect()
    }))
}

fn run_cell(spec: &SweepSpec, v: f64, eta: f64) -> SweepRow {
    let start = Instant::now();
    let params = match StringParams::new(spec.length, v, eta) {
        Ok(p) => p,
        Err(e) => return SweepRow::failed(v, eta, f64::NAN, &e),
    };
    let theory = params.decay_rate().unwrap_or(f64::INFINITY);
    let mut row = match cell_row(spec, &params) {
        Ok(r) => r,
        Err(e) => SweepRow::failed(v, eta, theory, &e),
    };
    row.runtime_seconds = start.elapsed().as_secs_f64();
    row
}

fn cell_row(spec: &SweepSpec, params: &StringParams) -> Result<SweepRow> {
    let n = &spec.numerics;
    let slack = 1.0 + n.slack;
    let data = InitialData::from_preset(spec.preset, params, n.grid)?;
    let (v, eta) = (params.speed, params.damping);

    if params.is_transparent() {
        let oracle = build_densities(&data, params)?;
        let after = params.period() + 2.0 * params.length / n.grid as f64;
        let e0 = usual_energy(&oracle.slice(0.0, n.grid)?);
        let late: Vec<f64> = n
            .times(params)
            .into_iter()
            .filter(|&t| t >= after)
            .collect();
        let worst = late
            .par_iter()
            .map(|&t| Ok(usual_energy(&oracle.slice(t, n.grid)?)))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let ok = !late.is_empty() && worst <= 1e-10 * e0;
        return Ok(SweepRow {
            v,
            eta,
            theory_rate: f64::INFINITY,
            fitted_rate: None,
            rel_rate_err: None,
            envelope_ok: ok,
            m1: None,
            m2: None,
            runtime_seconds: 0.0,
            detail: format!(
                "extinct by T_v: max E/E(0) after T_v = {:.3e}",
                worst / e0.max(f64::MIN_POSITIVE)
            ),
        });
    }

    let ext = extend_initial_data(&data, params)?;
    let ms =
        compute_coefficients(&ext, params, n.n_modes)?.with_residue_tolerance(n.residue_tolerance);
    let times = n.times(params);
    let trace = energy_trace(&ms, &times, n.grid, None)?;
    let fit = fit_decay_rate_from(&trace, n.fit_start * params.period());

    if params.is_undamped() {
        let bounds = undamped_bounds(trace.e[0], params);
        let ratio = worst_bound_ratio(&trace.e, std::iter::repeat(bounds));
        return Ok(SweepRow {
            v,
            eta,
            theory_rate: 0.0,
            fitted_rate: fit.as_ref().ok().map(|f| f.fitted_rate),
            rel_rate_err: None,
            envelope_ok: ratio <= slack,
            m1: None,
            m2: None,
            runtime_seconds: 0.0,
            detail: format!("undamped: worst bound ratio {ratio:.6}"),
        });
    }

    let c = decay_constants(&ms)?;
    let ratio = worst_bound_ratio(
        &trace.e,
        trace.times.iter().map(|&t| (c.lower(t), c.upper(t))),
    );
    let fit = fit?;
    Ok(SweepRow {
        v,
        eta,
        theory_rate: c.rate,
        fitted_rate: Some(fit.fitted_rate),
        rel_rate_err: fit.relative_error(),
        envelope_ok: ratio <= slack,
        m1: Some(c.m1),
        m2: Some(c.m2),
        runtime_seconds: 0.0,
        detail: format!(
            "worst envelope ratio {ratio:.6}, r^2 = {:.4}",
            fit.r_squared
        ),
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no sweep rows to export".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.v.to_string(),
            r.eta.to_string(),
            r.theory_rate.to_string(),
            fmt_opt(r.fitted_rate),
            fmt_opt(r.rel_rate_err),
            r.envelope_ok.to_string(),
            fmt_opt(r.m1),
            fmt_opt(r.m2),
            r.runtime_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_sweep_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_sweep_csv(rows, std::io::BufWriter::new(file))
}

fn parse_f64(field: &str, column: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::InvalidInput(format!("column {column}: cannot parse {field:?}")))
}

fn parse_opt(field: &str, column: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_f64(field, column).map(Some)
    }
}

/// Reads rows written by [`write_sweep_csv`]; `detail` comes back empty.
pub fn read_sweep_csv<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::InvalidInput(format!(
            "unexpected sweep header, expected {}",
            CSV_HEADER.join(",")
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            Ok(SweepRow {
                v: parse_f64(f(0), "v")?,
                eta: parse_f64(f(1), "eta")?,
                theory_rate: parse_f64(f(2), "theory_rate")?,
                fitted_rate: parse_opt(f(3), "fitted_rate")?,
                rel_rate_err: parse_opt(f(4), "rel_rate_err")?,
                envelope_ok: f(5).parse().map_err(|_| {
                    Error::InvalidInput(format!("column envelope_ok: cannot parse {:?}", f(5)))
                })?,
                m1: parse_opt(f(6), "M1")?,
                m2: parse_opt(f(7), "M2")?,
                runtime_seconds: parse_f64(f(8), "runtime_s")?,
                detail: String::new(),
            })
        })
        .collect()
}
