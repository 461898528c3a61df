//! Property suite over both solvers, producing a machine-readable report.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{build_densities, CharacteristicDensities};
use crate::energy::{
    conserved_energy, conserved_energy_bounds, decay_constants, envelope_bounds,
    fit_decay_rate_from, observability_integrals, undamped_bounds, usual_energy,
    weighted_invariant, EnergyTrace, EnvelopeVariant,
};
use crate::error::{Error, Result};
use crate::field::{FieldSlice, FieldSolver};
use crate::grid::relative_l2;
use crate::model::{extend_initial_data, InitialData, StringParams};
use crate::spectral::{
    compute_coefficients, parseval_weighted_integral, ModeSet, DEFAULT_RESIDUE_TOLERANCE,
};

/// Resolution and tolerance settings shared by verification and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    /// Truncation half-width `N`.
    pub n_modes: usize,
    /// Cells of the spatial grid, for both the data and the slices.
    pub grid: usize,
    /// Number of sample times, both ends included.
    pub time_samples: usize,
    /// End of the sampled window; `None` picks `5 T_v` for decay runs and
    /// `2 T_v` otherwise.
    pub t_final: Option<f64>,
    /// Multiplicative slack on bound checks.
    pub slack: f64,
    /// Start of the rate-fit window as a multiple of `T_v`.
    pub fit_start: f64,
    pub rate_tolerance: f64,
    pub parseval_tolerance: f64,
    pub residue_tolerance: f64,
    /// Seed for randomized spot checks.
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            n_modes: 512,
            grid: 2048,
            time_samples: 256,
            t_final: None,
            slack: 5e-3,
            fit_start: 0.5,
            rate_tolerance: 0.02,
            parseval_tolerance: 1e-6,
            residue_tolerance: DEFAULT_RESIDUE_TOLERANCE,
            seed: 0,
        }
    }
}

impl Numerics {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if self.n_modes < 1 {
            return bad("n_modes must be >= 1");
        }
        if self.grid < 8 {
            return bad("grid must have at least 8 cells");
        }
        if self.time_samples < 2 {
            return bad("time_samples must be >= 2");
        }
        if let Some(t) = self.t_final {
            if !(t.is_finite() && t > 0.0) {
                return bad("t_final must be positive");
            }
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return bad("slack must be >= 0");
        }
        if !(self.fit_start >= 0.0 && self.fit_start.is_finite()) {
            return bad("fit_start must be >= 0");
        }
        for (name, v) in [
            ("rate_tolerance", self.rate_tolerance),
            ("parseval_tolerance", self.parseval_tolerance),
            ("residue_tolerance", self.residue_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// The sampled window for `params`.
    pub fn window(&self, params: &StringParams) -> f64 {
        self.t_final.unwrap_or_else(|| {
            let periods = if params.is_damped() { 5.0 } else { 2.0 };
            periods * params.period()
        })
    }

    /// `time_samples` uniform times on `[0, t_final]`.
    pub fn times(&self, params: &StringParams) -> Vec<f64> {
        linspace(0.0, self.window(params), self.time_samples)
    }
}

/// `count` uniform points on `[a, b]`, both ends included.
pub fn linspace(a: f64, b: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..count)
            .map(|k| {
                if k + 1 == count {
                    b
                } else {
                    a + (b - a) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Non-finite values are written as JSON `null`; read them back as NaN.
fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    #[serde(deserialize_with = "nullable_f64")]
    pub measured: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    /// Error-style check: passes iff `measured <= threshold`.
    pub fn at_most(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    /// Bound-style check: passes iff `measured >= threshold`.
    pub fn at_least(name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed: measured >= threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    fn failed(name: &str, err: &Error) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub params: StringParams,
    pub numerics: Numerics,
    /// Sorted by name.
    pub checks: Vec<CheckResult>,
    /// Checks not applicable to these parameters.
    pub skipped: Vec<String>,
    pub overall: bool,
}

impl VerificationReport {
    fn assemble(
        params: StringParams,
        numerics: Numerics,
        mut checks: Vec<CheckResult>,
        mut skipped: Vec<String>,
    ) -> Self {
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        skipped.sort();
        let overall = checks.iter().all(|c| c.passed);
        Self {
            params,
            numerics,
            checks,
            skipped,
            overall,
        }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub const UNDAMPED_CHECKS: &[&str] = &[
    "boundary_condition",
    "conjugate_symmetry",
    "conservation",
    "conserved_energy_bounds",
    "dirichlet",
    "energy_identity",
    "initial_reproduction",
    "leibniz",
    "observability",
    "oracle_equivalence",
    "oracle_initial_data",
    "parseval",
    "periodicity",
    "reality",
    "stab_bounds",
    "truncation_convergence",
    "unified_expression",
];

pub const DAMPED_CHECKS: &[&str] = &[
    "boundary_condition",
    "conjugate_symmetry",
    "decay_rate_fit",
    "dirichlet",
    "envelope_nesting",
    "est0_envelope",
    "est1_envelope",
    "initial_reproduction",
    "inlet_variant",
    "no_extinction",
    "oracle_equivalence",
    "oracle_initial_data",
    "parseval",
    "reality",
    "s_invariance",
    "s_modes",
    "stab0_envelope",
    "stab1_envelope",
    "truncation_convergence",
    "unified_expression",
];

pub const TRANSPARENT_CHECKS: &[&str] = &["extinction", "oracle_initial_data"];

/// Names of the checks that apply to `params`, in report order.
pub fn applicable_checks(params: &StringParams) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = if params.is_undamped() {
        UNDAMPED_CHECKS
            .iter()
            .copied()
            .filter(|&n| n != "observability" || params.speed > 0.0)
            .collect()
    } else if params.is_damped() {
        DAMPED_CHECKS
            .iter()
            .copied()
            .filter(|&n| n != "inlet_variant" || params.speed > 0.0)
            .collect()
    } else {
        TRANSPARENT_CHECKS.to_vec()
    };
    names.sort();
    names
}

fn all_check_names() -> Vec<&'static str> {
    let mut all: Vec<&'static str> = UNDAMPED_CHECKS
        .iter()
        .chain(DAMPED_CHECKS)
        .chain(TRANSPARENT_CHECKS)
        .copied()
        .collect();
    all.sort();
    all.dedup();
    all
}

/// Per-time quantities of a spectral run.
#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    e: f64,
    cal_e: f64,
    s: Option<f64>,
    /// `(1/(1-v^2)) int (phi_x^2 + phi_t^2 + 2 v phi_x phi_t)`
    identity_lhs: f64,
    residue: f64,
    sup_phi: f64,
    sup_gradient: f64,
}

fn sample_slice(slice: &FieldSlice, residue: f64, params: &StringParams) -> Result<Sample> {
    let v = params.speed;
    let integrand: Vec<f64> = slice
        .phi_x
        .iter()
        .zip(&slice.phi_t)
        .map(|(a, b)| a * a + b * b + 2.0 * v * a * b)
        .collect();
    Ok(Sample {
        t: slice.t,
        e: usual_energy(slice),
        cal_e: conserved_energy(slice, v),
        s: if params.is_damped() {
            Some(weighted_invariant(slice, params)?)
        } else {
            None
        },
        identity_lhs: slice.grid.trapezoid(&integrand) / (1.0 - v * v),
        residue,
        sup_phi: slice.phi.iter().fold(0.0_f64, |m, p| m.max(p.abs())),
        sup_gradient: slice.sup_gradient(),
    })
}

fn spectral_samples(ms: &ModeSet, times: &[f64], cells: usize) -> Result<Vec<Sample>> {
    let params = *ms.params_snapshot();
    times
        .par_iter()
        .map(|&t| {
            let (slice, residue) = ms.slice_with_residue(t, cells)?;
            sample_slice(&slice, residue, &params)
        })
        .collect()
}

/// Solvers and data shared by the checks of one run.
struct Run<'a> {
    params: StringParams,
    data: &'a InitialData,
    numerics: Numerics,
    oracle: CharacteristicDensities,
    modes: Option<ModeSet>,
}

fn build_modes(
    data: &InitialData,
    params: &StringParams,
    numerics: &Numerics,
    n_modes: usize,
) -> Result<ModeSet> {
    let ext = extend_initial_data(data, params)?;
    Ok(compute_coefficients(&ext, params, n_modes)?
        .with_residue_tolerance(numerics.residue_tolerance))
}

/// Largest `max(lo/E, E/hi)` over the samples, `1` meaning tight.
pub(crate) fn worst_bound_ratio(e: &[f64], bounds: impl Iterator<Item = (f64, f64)>) -> f64 {
    e.iter()
        .zip(bounds)
        .map(|(&e, (lo, hi))| {
            let below = if e > 0.0 { lo / e } else { f64::INFINITY };
            below.max(e / hi)
        })
        .fold(0.0, f64::max)
}

/// Runs every applicable check once. Solver failures become failed checks.
pub fn run_suite(
    params: &StringParams,
    data: &InitialData,
    numerics: &Numerics,
) -> Result<VerificationReport> {
    numerics.validate()?;
    data.check_length(params)?;
    let oracle = build_densities(data, params)?;
    let modes = if params.is_transparent() {
        None
    } else {
        Some(build_modes(data, params, numerics, numerics.n_modes)?)
    };
    let run = Run {
        params: *params,
        data,
        numerics: *numerics,
        oracle,
        modes,
    };
    let names = applicable_checks(params);
    let mut checks = if params.is_transparent() {
        transparent_checks(&run)
    } else {
        spectral_checks(&run)
    };
    // every applicable check appears exactly once
    for &name in &names {
        if !checks.iter().any(|c| c.name == name) {
            checks.push(CheckResult::failed(
                name,
                &Error::InvalidInput("check did not run".into()),
            ));
        }
    }
    checks.retain(|c| names.contains(&c.name.as_str()));
    let skipped = all_check_names()
        .into_iter()
        .filter(|n| !names.contains(n))
        .map(String::from)
        .collect();
    Ok(VerificationReport::assemble(
        *params, *numerics, checks, skipped,
    ))
}

fn or_failed(name: &str, r: Result<CheckResult>) -> CheckResult {
    r.unwrap_or_else(|e| CheckResult::failed(name, &e))
}

fn transparent_checks(run: &Run) -> Vec<CheckResult> {
    vec![
        or_failed("extinction", extinction_check(run)),
        or_failed("oracle_initial_data", oracle_initial_check(run)),
    ]
}

/// `E(t) < 1e-10 E(0)` at every sampled `t >= T_v + 2h` of the oracle.
fn extinction_check(run: &Run) -> Result<CheckResult> {
    let p = &run.params;
    let cells = run.numerics.grid;
    let times = run.numerics.times(p);
    let h = p.length / cells as f64;
    let after = p.period() + 2.0 * h;
    let e0 = usual_energy(&run.oracle.slice(0.0, cells)?);
    let late: Vec<f64> = times.into_iter().filter(|&t| t >= after).collect();
    if late.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no sample time beyond T_v + 2h = {after}; increase t_final"
        )));
    }
    let worst = late
        .par_iter()
        .map(|&t| Ok(usual_energy(&run.oracle.slice(t, cells)?)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let ratio = if e0 > 0.0 { worst / e0 } else { 0.0 };
    Ok(CheckResult::at_most(
        "extinction",
        ratio,
        1e-10,
        format!(
            "max E(t)/E(0) over {} samples with t >= {after:.6}",
            late.len()
        ),
    ))
}

/// Oracle at `t = 0` against the data, relative L2 on `(phi_x, phi_t)`.
fn oracle_initial_check(run: &Run) -> Result<CheckResult> {
    let slice = run.oracle.slice(0.0, run.data.cells())?;
    let err = gradient_distance(&slice, run.data.dphi0(), run.data.phi1());
    Ok(CheckResult::at_most(
        "oracle_initial_data",
        err,
        1e-4,
        "relative L2 distance of the oracle at t = 0 to (phi0_x, phi1)",
    ))
}

fn gradient_distance(slice: &FieldSlice, phi_x: &[f64], phi_t: &[f64]) -> f64 {
    let a: Vec<f64> = slice.phi_x.iter().chain(&slice.phi_t).copied().collect();
    let b: Vec<f64> = phi_x.iter().chain(phi_t).copied().collect();
    relative_l2(&a, &b)
}

fn spectral_checks(run: &Run) -> Vec<CheckResult> {
    let ms = run.modes.as_ref().expect("spectral run has modes");
    let p = run.params;
    let cells = run.numerics.grid;
    let times = run.numerics.times(&p);
    let samples = match spectral_samples(ms, &times, cells) {
        Ok(s) => s,
        Err(e) => {
            return applicable_checks(&p)
                .into_iter()
                .map(|n| CheckResult::failed(n, &e))
                .collect()
        }
    };
    let sup_phi = samples.iter().map(|s| s.sup_phi).fold(0.0, f64::max);
    let sup_grad = samples.iter().map(|s| s.sup_gradient).fold(0.0, f64::max);

    let mut out = vec![
        or_failed("parseval", parseval_check(run, ms)),
        conjugate_check(ms),
        reality_check(ms, &samples),
        or_failed("dirichlet", dirichlet_check(run, ms, sup_phi)),
        or_failed(
            "boundary_condition",
            boundary_condition_check(run, ms, sup_grad),
        ),
        or_failed("initial_reproduction", initial_reproduction_check(run, ms)),
        or_failed("oracle_initial_data", oracle_initial_check(run)),
        or_failed("oracle_equivalence", oracle_equivalence_check(run, ms)),
        or_failed("truncation_convergence", truncation_check(run, ms)),
        or_failed(
            "unified_expression",
            unified_expression_check(run, ms, sup_grad),
        ),
    ];
    if p.is_undamped() {
        out.extend(undamped_checks(run, ms, &samples));
    } else {
        out.extend(damped_checks(run, ms, &samples));
    }
    out
}

fn parseval_check(run: &Run, ms: &ModeSet) -> Result<CheckResult> {
    let ext = extend_initial_data(run.data, &run.params)?;
    let integral = parseval_weighted_integral(&ext, &run.params)?;
    let sum = ms.parseval_weighted_sum();
    Ok(CheckResult::at_most(
        "parseval",
        rel_diff(sum, integral),
        run.numerics.parseval_tolerance,
        format!("sum |w_n a_n|^2 = {sum:.12e}, weighted integral = {integral:.12e}"),
    ))
}

fn conjugate_check(ms: &ModeSet) -> CheckResult {
    CheckResult::at_most(
        "conjugate_symmetry",
        ms.conjugate_mismatch(),
        1e-12,
        "largest |a_m - conj(a_n)| / max|a| over conjugate pairs",
    )
}

fn reality_check(ms: &ModeSet, samples: &[Sample]) -> CheckResult {
    let worst = samples.iter().map(|s| s.residue).fold(0.0, f64::max);
    CheckResult::at_most(
        "reality",
        worst,
        ms.residue_tolerance(),
        format!(
            "largest relative imaginary residue over {} slices",
            samples.len()
        ),
    )
}

fn boundary_times(p: &StringParams) -> Vec<f64> {
    linspace(0.0, 3.0 * p.period(), 97)
}

fn dirichlet_check(run: &Run, ms: &ModeSet, sup_phi: f64) -> Result<CheckResult> {
    let p = run.params;
    let worst = boundary_times(&p)
        .par_iter()
        .map(|&t| {
            Ok(ms
                .evaluate_with_residue(p.length + p.speed * t, t)?
                .0
                .phi
                .abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckResult::at_most(
        "dirichlet",
        worst,
        1e-8 * sup_phi,
        "largest |phi(L + v t, t)| for t in [0, 3 T_v]; threshold 1e-8 sup|phi|",
    ))
}

fn boundary_condition_check(run: &Run, ms: &ModeSet, sup_grad: f64) -> Result<CheckResult> {
    let p = run.params;
    let (v, eta) = (p.speed, p.damping);
    let worst = boundary_times(&p)
        .par_iter()
        .map(|&t| {
            let f = ms.evaluate_with_residue(v * t, t)?.0;
            Ok(((1.0 - eta * v) * f.phi_x - (eta - v) * f.phi_t).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckResult::at_most(
        "boundary_condition",
        worst,
        1e-6 * sup_grad,
        "largest |(1 - eta v) phi_x - (eta - v) phi_t| at x = v t; threshold 1e-6 sup(|phi_x| + |phi_t|)",
    ))
}

fn initial_reproduction_check(run: &Run, ms: &ModeSet) -> Result<CheckResult> {
    let (slice, _) = ms.slice_with_residue(0.0, run.data.cells())?;
    let err = gradient_distance(&slice, run.data.dphi0(), run.data.phi1());
    Ok(CheckResult::at_most(
        "initial_reproduction",
        err,
        1e-4,
        "relative L2 distance of the series at t = 0 to (phi0_x, phi1)",
    ))
}

/// Relative L2 distance between the two solvers' `(phi_x, phi_t)`.
pub fn oracle_distance(
    ms: &ModeSet,
    oracle: &CharacteristicDensities,
    t: f64,
    cells: usize,
) -> Result<f64> {
    let (s, _) = ms.slice_with_residue(t, cells)?;
    let o = oracle.oracle_slice(t, cells)?;
    Ok(gradient_distance(&s, &o.phi_x, &o.phi_t))
}

fn oracle_equivalence_check(run: &Run, ms: &ModeSet) -> Result<CheckResult> {
    let tv = run.params.period();
    let times = [0.0, 0.5 * tv, tv, 2.0 * tv];
    let worst = times
        .par_iter()
        .map(|&t| oracle_distance(ms, &run.oracle, t, run.numerics.grid))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckResult::at_most(
        "oracle_equivalence",
        worst,
        1e-4,
        "largest relative L2 distance of (phi_x, phi_t) at t in {0, T_v/2, T_v, 2 T_v}",
    ))
}

/// Reconstruction error at `t = 0` for `N` and `N/2` modes.
fn truncation_check(run: &Run, ms: &ModeSet) -> Result<CheckResult> {
    let half = (run.numerics.n_modes / 2).max(1);
    let coarse = build_modes(run.data, &run.params, &run.numerics, half)?;
    let cells = run.data.cells();
    let err = |m: &ModeSet| -> Result<f64> {
        let (s, _) = m.slice_with_residue(0.0, cells)?;
        Ok(gradient_distance(&s, run.data.dphi0(), run.data.phi1()))
    };
    let (fine_err, coarse_err) = (err(ms)?, err(&coarse)?);
    Ok(CheckResult::at_most(
        "truncation_convergence",
        fine_err,
        1.5 * coarse_err,
        format!(
            "error with N = {}: {fine_err:.3e}; with N = {half}: {coarse_err:.3e}",
            run.numerics.n_modes
        ),
    ))
}

/// `phi_x + phi_t` against the single forward-characteristic series at 64
/// seeded random points of `[0, 2 T_v]`.
fn unified_expression_check(run: &Run, ms: &ModeSet, sup_grad: f64) -> Result<CheckResult> {
    let p = run.params;
    let mut rng = StdRng::seed_from_u64(run.numerics.seed);
    let mut worst = 0.0_f64;
    for _ in 0..64 {
        let t = rng.gen_range(0.0..=2.0 * p.period());
        let x = p.speed * t + rng.gen_range(0.0..=p.length);
        let f = ms.evaluate_with_residue(x, t)?.0;
        worst = worst.max((f.phi_x + f.phi_t - ms.forward_characteristic_sum(x, t)).abs());
    }
    Ok(CheckResult::at_most(
        "unified_expression",
        worst,
        1e-10 * sup_grad,
        format!("64 random points, seed {}", run.numerics.seed),
    ))
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn undamped_checks(run: &Run, ms: &ModeSet, samples: &[Sample]) -> Vec<CheckResult> {
    let p = run.params;
    let slack = 1.0 + run.numerics.slack;
    let cal0 = samples[0].cal_e;
    let e: Vec<f64> = samples.iter().map(|s| s.e).collect();
    let drift = samples
        .iter()
        .map(|s| rel_diff(s.cal_e, cal0))
        .fold(0.0, f64::max);
    let mode_side = std::f64::consts::PI.powi(2) / p.length * ms.odd_weighted_sum();
    let identity = samples
        .iter()
        .map(|s| rel_diff(s.identity_lhs, mode_side))
        .fold(0.0, f64::max);
    let stab = undamped_bounds(e[0], &p);
    let es0 = conserved_energy_bounds(cal0, &p);
    let mut out = vec![
        CheckResult::at_most(
            "conservation",
            drift,
            1e-6,
            format!("largest relative drift of calE over {} samples", samples.len()),
        ),
        CheckResult::at_most(
            "energy_identity",
            identity,
            1e-6,
            format!("weighted quadratic form against (pi^2/L) sum |(2n+1) a_n|^2 = {mode_side:.12e}"),
        ),
        CheckResult::at_most(
            "stab_bounds",
            worst_bound_ratio(&e, std::iter::repeat(stab)),
            slack,
            "largest max(lo/E, E/hi) for E(0)/gamma_v <= E <= gamma_v E(0)",
        ),
        CheckResult::at_most(
            "conserved_energy_bounds",
            worst_bound_ratio(&e, samples.iter().map(|s| conserved_energy_bounds(s.cal_e, &p))),
            slack,
            format!(
                "largest max(lo/E, E/hi) for calE/(1+v) <= E <= calE/(1-v); at t = 0: [{:.6e}, {:.6e}]",
                es0.0, es0.1
            ),
        ),
        or_failed("periodicity", periodicity_check(run, ms)),
        or_failed("leibniz", leibniz_check(run, ms, cal0)),
    ];
    if p.speed > 0.0 {
        out.push(or_failed("observability", observability_check(run, ms)));
    }
    out
}

/// `sup |phi(x + v T, t + T) + phi(x, t)|` over a 64 x 64 sample.
fn periodicity_check(run: &Run, ms: &ModeSet) -> Result<CheckResult> {
    let p = run.params;
    let tv = p.period();
    let times = linspace(0.0, tv, 64);
    let (worst, sup) = times
        .par_iter()
        .map(|&t| {
            let (a, _) = ms.slice_with_residue(t, 63)?;
            let (b, _) = ms.slice_with_residue(t + tv, 63)?;
            let gap = a
                .phi
                .iter()
                .zip(&b.phi)
                .map(|(x, y)| (x + y).abs())
                .fold(0.0, f64::max);
            let sup = a.phi.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            Ok((gap, sup))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold((0.0_f64, 0.0_f64), |(g, s), (a, b)| (g.max(a), s.max(b)));
    Ok(CheckResult::at_most(
        "periodicity",
        worst,
        1e-6 * sup,
        "sup |phi(x + v T_v, t + T_v) + phi(x, t)| on a 64 x 64 sample; threshold 1e-6 sup|phi|",
    ))
}

/// Centred difference of calE at 16 times in the window.
fn leibniz_check(run: &Run, ms: &ModeSet, cal0: f64) -> Result<CheckResult> {
    let p = run.params;
    let tv = p.period();
    let delta = 1e-3 * tv;
    let cells = run.numerics.grid;
    let times = linspace(delta, run.numerics.window(&p) - delta, 16);
    let worst = times
        .par_iter()
        .map(|&t| {
            let up = conserved_energy(&ms.slice_with_residue(t + delta, cells)?.0, p.speed);
            let down = conserved_energy(&ms.slice_with_residue(t - delta, cells)?.0, p.speed);
            Ok(((up - down) / (2.0 * delta)).abs())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(CheckResult::at_most(
        "leibniz",
        worst,
        1e-5 * cal0 / tv,
        "largest |d calE/dt| by centred differences; threshold 1e-5 calE(0)/T_v",
    ))
}

/// Both boundary-trace integrals against `4 calE(0)/(1-v^2)^2`.
fn observability_check(run: &Run, ms: &ModeSet) -> Result<CheckResult> {
    let v = run.params.speed;
    let obs = observability_integrals(ms, run.numerics.time_samples.max(2) * 4, run.numerics.grid)?;
    let target = obs.identity_value(v);
    let err = rel_diff(obs.damped_end, target).max(rel_diff(obs.clamped_end, target));
    Ok(CheckResult::at_most(
        "observability",
        err,
        0.01,
        format!(
            "(1/v^2) int phi_x^2 at x = v t: {:.6e}; int phi_x^2 at x = L + v t: {:.6e}; 4 calE(0)/(1-v^2)^2 = {target:.6e}",
            obs.damped_end, obs.clamped_end
        ),
    ))
}

fn damped_checks(run: &Run, ms: &ModeSet, samples: &[Sample]) -> Vec<CheckResult> {
    let p = run.params;
    let slack = 1.0 + run.numerics.slack;
    let e: Vec<f64> = samples.iter().map(|s| s.e).collect();
    let e0 = e[0];
    let mode_side = 8.0 / p.length * ms.parseval_weighted_sum();
    let mut out = Vec::new();

    let s_times = linspace(0.0, 3.0 * p.period(), 16);
    out.push(or_failed(
        "s_invariance",
        s_invariance_check(ms, &s_times, run.numerics.grid),
    ));
    out.push(match samples[0].s {
        Some(s0) => CheckResult::at_most(
            "s_modes",
            rel_diff(s0, mode_side),
            1e-6,
            format!("S(0) = {s0:.12e}, (8/L) sum |w_n a_n|^2 = {mode_side:.12e}"),
        ),
        None => CheckResult::failed("s_modes", &Error::NotDamped(p.damping)),
    });

    match decay_constants(ms) {
        Ok(c) => {
            out.push(CheckResult::at_most(
                "est0_envelope",
                worst_bound_ratio(&e, samples.iter().map(|s| (c.lower(s.t), c.upper(s.t)))),
                slack,
                format!(
                    "largest max(lo/E, E/hi) for M1 = {:.6e}, M2 = {:.6e}, rate = {:.6}",
                    c.m1, c.m2, c.rate
                ),
            ));
            let decay = |t: f64| (-c.rate * t).exp();
            out.push(CheckResult::at_most(
                "est1_envelope",
                worst_bound_ratio(
                    &e,
                    samples.iter().map(|s| (c.m1_simple * decay(s.t), c.m2_simple * decay(s.t))),
                ),
                slack,
                "largest max(lo/E, E/hi) for the simplified constants (1 -+ v)(2/L) sum, gamma_eta^2 factor above",
            ));
            let floor = samples
                .iter()
                .map(|s| c.lower(s.t) / slack)
                .fold(f64::INFINITY, f64::min);
            let least = e.iter().copied().fold(f64::INFINITY, f64::min);
            out.push(CheckResult {
                name: "no_extinction".into(),
                passed: floor > 0.0 && least >= floor,
                measured: least,
                threshold: floor,
                detail: "smallest sampled E against the smallest lower envelope, which must stay positive".into(),
            });
        }
        Err(err) => {
            for n in ["est0_envelope", "est1_envelope", "no_extinction"] {
                out.push(CheckResult::failed(n, &err));
            }
        }
    }

    let bounds = |variant| -> Result<Vec<(f64, f64)>> {
        samples
            .iter()
            .map(|s| envelope_bounds(e0, s.t, &p, variant))
            .collect()
    };
    match (
        bounds(EnvelopeVariant::MinMaxRatio),
        bounds(EnvelopeVariant::SpeedFactor),
    ) {
        (Ok(b4), Ok(b5)) => {
            out.push(CheckResult::at_most(
                "stab0_envelope",
                worst_bound_ratio(&e, b4.iter().copied()),
                slack,
                "largest max(lo/E, E/hi) for the min/max-ratio bounds in E(0)",
            ));
            out.push(CheckResult::at_most(
                "stab1_envelope",
                worst_bound_ratio(&e, b5.iter().copied()),
                slack,
                "largest max(lo/E, E/hi) for E(0)/(gamma_eta^2 gamma_v) and gamma_eta^2 gamma_v E(0)",
            ));
            let outside = b4
                .iter()
                .zip(&b5)
                .filter(|((l4, h4), (l5, h5))| l4 < l5 || h4 > h5)
                .count();
            out.push(CheckResult::at_most(
                "envelope_nesting",
                outside as f64,
                0.0,
                "samples where the ratio interval is not inside the simplified interval",
            ));
        }
        (Err(err), _) | (_, Err(err)) => {
            for n in ["stab0_envelope", "stab1_envelope", "envelope_nesting"] {
                out.push(CheckResult::failed(n, &err));
            }
        }
    }

    out.push(or_failed("decay_rate_fit", rate_fit_check(run, samples)));
    if p.speed > 0.0 {
        out.push(check_inlet_variant(&p, run.data, &run.numerics));
    }
    out
}

fn s_invariance_check(ms: &ModeSet, times: &[f64], cells: usize) -> Result<CheckResult> {
    let p = *ms.params_snapshot();
    let s: Vec<f64> = times
        .par_iter()
        .map(|&t| weighted_invariant(&ms.slice_with_residue(t, cells)?.0, &p))
        .collect::<Result<_>>()?;
    let worst = s.iter().map(|x| rel_diff(*x, s[0])).fold(0.0, f64::max);
    Ok(CheckResult::at_most(
        "s_invariance",
        worst,
        1e-6,
        format!(
            "largest relative change of S over {} times in [0, 3 T_v]",
            times.len()
        ),
    ))
}

fn trace_of(params: &StringParams, samples: &[Sample]) -> EnergyTrace {
    EnergyTrace {
        params: *params,
        times: samples.iter().map(|s| s.t).collect(),
        e: samples.iter().map(|s| s.e).collect(),
        cal_e: None,
        s: None,
        envelope: vec![None; samples.len()],
    }
}

fn rate_fit_check(run: &Run, samples: &[Sample]) -> Result<CheckResult> {
    let p = run.params;
    let fit = fit_decay_rate_from(&trace_of(&p, samples), run.numerics.fit_start * p.period())?;
    let err = fit.relative_error().ok_or(Error::NotDamped(p.damping))?;
    Ok(CheckResult::at_most(
        "decay_rate_fit",
        err,
        run.numerics.rate_tolerance,
        format!(
            "fitted {:.6} against (1 - v^2) ln|gamma_eta| / L = {:.6} (r^2 = {:.4}, {} samples)",
            fit.fitted_rate,
            fit.theory_rate.unwrap_or(f64::NAN),
            fit.r_squared,
            fit.samples
        ),
    ))
}

/// Damping at the inlet: reruns the decay checks with `v -> -v`.
///
/// Passes iff the fitted rate is within the rate tolerance of the unchanged
/// theory rate and the sharp and simplified envelopes, the latter with
/// `gamma_|v|`, hold at every sample.
pub fn check_inlet_variant(
    params: &StringParams,
    data: &InitialData,
    numerics: &Numerics,
) -> CheckResult {
    or_failed("inlet_variant", inlet_variant(params, data, numerics))
}

fn inlet_variant(
    params: &StringParams,
    data: &InitialData,
    numerics: &Numerics,
) -> Result<CheckResult> {
    if params.speed.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::ParameterDomain(format!(
            "the inlet variant needs 0 < v < 1, got v = {}",
            params.speed
        )));
    }
    let inlet = StringParams::inlet_damped(params.length, params.speed, params.damping)?;
    if !inlet.is_damped() {
        return Err(Error::NotDamped(params.damping));
    }
    let data = match data.preset() {
        Some(preset) => InitialData::from_preset(preset, &inlet, data.cells())?,
        None => data.clone(),
    };
    let ms = build_modes(&data, &inlet, numerics, numerics.n_modes)?;
    let times = numerics.times(&inlet);
    let samples = spectral_samples(&ms, &times, numerics.grid)?;
    let fit = fit_decay_rate_from(
        &trace_of(&inlet, &samples),
        numerics.fit_start * inlet.period(),
    )?;
    let theory = params.decay_rate().ok_or(Error::Transparent)?;
    let err = (fit.fitted_rate - theory).abs() / theory;
    let slack = 1.0 + numerics.slack;
    let e: Vec<f64> = samples.iter().map(|s| s.e).collect();
    let c = decay_constants(&ms)?;
    let sharp = worst_bound_ratio(&e, samples.iter().map(|s| (c.lower(s.t), c.upper(s.t))));
    let simple = worst_bound_ratio(
        &e,
        samples
            .iter()
            .map(|s| envelope_bounds(e[0], s.t, &inlet, EnvelopeVariant::SpeedFactor))
            .collect::<Result<Vec<_>>>()?
            .into_iter(),
    );
    let envelopes_ok = sharp <= slack && simple <= slack;
    Ok(CheckResult {
        name: "inlet_variant".into(),
        passed: err <= numerics.rate_tolerance && envelopes_ok,
        measured: err,
        threshold: numerics.rate_tolerance,
        detail: format!(
            "v -> -v: fitted rate {:.6} against {theory:.6}; sharp envelope ratio {sharp:.6}, gamma_|v| envelope ratio {simple:.6} (limit {slack})",
            fit.fitted_rate
        ),
    })
}
