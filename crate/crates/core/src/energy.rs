//! Energy functionals, decay constants and envelope bounds.
//!
//! All spatial integrals are trapezoid sums on the slice grid and all
//! boundary-trace integrals are trapezoid sums in time.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldSlice, FieldSolver};
use crate::grid::trapezoid;
use crate::model::StringParams;
use crate::spectral::ModeSet;

/// Minimum number of usable samples for a log-linear fit.
pub const MIN_FIT_SAMPLES: usize = 8;

/// `E_v(t) = 1/2 int (phi_t^2 + phi_x^2) dx`.
pub fn usual_energy(slice: &FieldSlice) -> f64 {
    let integrand: Vec<f64> = slice
        .phi_x
        .iter()
        .zip(&slice.phi_t)
        .map(|(a, b)| 0.5 * (a * a + b * b))
        .collect();
    slice.grid.trapezoid(&integrand)
}

/// `1/2 int (phi_t + v phi_x)^2 + (1 - v^2) phi_x^2 dx`, conserved when `eta = 0`.
pub fn conserved_energy(slice: &FieldSlice, v: f64) -> f64 {
    let integrand: Vec<f64> = slice
        .phi_x
        .iter()
        .zip(&slice.phi_t)
        .map(|(a, b)| 0.5 * ((b + v * a).powi(2) + (1.0 - v * v) * a * a))
        .collect();
    slice.grid.trapezoid(&integrand)
}

/// The exponentially weighted invariant of the damped string
///
/// ```text
/// S(t) = 1/(1+v)              int e^{(1+v) ln|g| (t-x)/L} (phi_x - phi_t)^2 dx
///      + 1/(g^2 (1-v))        int e^{(1-v) ln|g| (t+x)/L} (phi_t + phi_x)^2 dx
/// ```
///
/// which equals `(8/L) sum |w_n a_n|^2` for every `t`.
pub fn weighted_invariant(slice: &FieldSlice, params: &StringParams) -> Result<f64> {
    if !params.is_damped() {
        return Err(Error::NotDamped(params.damping));
    }
    let g = params.gamma_eta().ok_or(Error::Transparent)?;
    let lg = g.abs().ln();
    let (l, v, t) = (params.length, params.speed, slice.t);
    let integrand: Vec<f64> = slice
        .x()
        .into_iter()
        .zip(slice.phi_x.iter().zip(&slice.phi_t))
        .map(|(x, (px, pt))| {
            let back = ((1.0 + v) * lg * (t - x) / l).exp() * (px - pt).powi(2) / (1.0 + v);
            let fwd =
                ((1.0 - v) * lg * (t + x) / l).exp() * (pt + px).powi(2) / (g * g * (1.0 - v));
            back + fwd
        })
        .collect();
    Ok(slice.grid.trapezoid(&integrand))
}

/// Explicit constants of the two-sided exponential estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstants {
    /// `(2/L) min(1+v, |g|^{1+v} (1-v)) sum |w_n a_n|^2`
    pub m1: f64,
    /// `(2/L) max(|g|^{1+v} (1+v), g^2 (1-v)) sum |w_n a_n|^2`
    pub m2: f64,
    /// Simplified lower constant `(1-|v|) (2/L) sum |w_n a_n|^2`.
    pub m1_simple: f64,
    /// Simplified upper constant `g^2 (1+|v|) (2/L) sum |w_n a_n|^2`.
    pub m2_simple: f64,
    pub rate: f64,
    pub mode_sum: f64,
}

impl DecayConstants {
    pub fn lower(&self, t: f64) -> f64 {
        self.m1 * (-self.rate * t).exp()
    }

    pub fn upper(&self, t: f64) -> f64 {
        self.m2 * (-self.rate * t).exp()
    }
}

fn min_max_factors(params: &StringParams) -> Result<(f64, f64)> {
    if !params.is_damped() {
        return Err(Error::NotDamped(params.damping));
    }
    let g = params.gamma_eta().ok_or(Error::Transparent)?;
    let v = params.speed;
    let gp = g.abs().powf(1.0 + v);
    Ok((
        (1.0 + v).min(gp * (1.0 - v)),
        (gp * (1.0 + v)).max(g * g * (1.0 - v)),
    ))
}

/// Constants of the exponential estimate from a mode sum `sum |w_n a_n|^2`.
pub fn decay_constants_from_sum(mode_sum: f64, params: &StringParams) -> Result<DecayConstants> {
    let (lo, hi) = min_max_factors(params)?;
    let g = params.gamma_eta().ok_or(Error::Transparent)?;
    let base = 2.0 / params.length * mode_sum;
    let av = params.speed.abs();
    Ok(DecayConstants {
        m1: lo * base,
        m2: hi * base,
        m1_simple: (1.0 - av) * base,
        m2_simple: g * g * (1.0 + av) * base,
        rate: params.decay_rate().ok_or(Error::Transparent)?,
        mode_sum,
    })
}

pub fn decay_constants(ms: &ModeSet) -> Result<DecayConstants> {
    decay_constants_from_sum(ms.parseval_weighted_sum(), ms.params_snapshot())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeVariant {
    /// Ratio of the sharp constants.
    MinMaxRatio,
    /// `[1/(g^2 gamma_v), g^2 gamma_v]`, with `gamma_v` taken at `|v|`.
    SpeedFactor,
}

/// Bounds on `E_v(t)` in terms of `E_v(0)`.
pub fn envelope_bounds(
    e0: f64,
    t: f64,
    params: &StringParams,
    variant: EnvelopeVariant,
) -> Result<(f64, f64)> {
    if e0 < 0.0 {
        return Err(Error::InvalidInput(format!(
            "initial energy must be >= 0, got {e0}"
        )));
    }
    let (lo, hi) = min_max_factors(params)?;
    let g = params.gamma_eta().ok_or(Error::Transparent)?;
    let decay = (-params.decay_rate().ok_or(Error::Transparent)? * t).exp();
    let c = match variant {
        EnvelopeVariant::MinMaxRatio => lo / hi,
        EnvelopeVariant::SpeedFactor => {
            let av = params.speed.abs();
            (1.0 - av) / ((1.0 + av) * g * g)
        }
    };
    Ok((c * e0 * decay, e0 * decay / c))
}

/// Bounds of the undamped string: `E_v(0)/gamma_|v| <= E_v(t) <= gamma_|v| E_v(0)`.
pub fn undamped_bounds(e0: f64, params: &StringParams) -> (f64, f64) {
    let av = params.speed.abs();
    let gv = (1.0 + av) / (1.0 - av);
    (e0 / gv, gv * e0)
}

/// Bounds of the undamped string in terms of the conserved energy:
/// `calE/(1+|v|) <= E_v(t) <= calE/(1-|v|)`.
pub fn conserved_energy_bounds(cal_e0: f64, params: &StringParams) -> (f64, f64) {
    let av = params.speed.abs();
    (cal_e0 / (1.0 + av), cal_e0 / (1.0 - av))
}

/// Energies sampled at increasing times, with the theoretical envelope.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTrace {
    pub params: StringParams,
    pub times: Vec<f64>,
    pub e: Vec<f64>,
    /// Conserved energy, populated for the undamped string only.
    pub cal_e: Option<Vec<f64>>,
    /// Weighted invariant, populated for `eta > 0`, `eta != 1` only.
    pub s: Option<Vec<f64>>,
    /// `(lo, hi)` per sample; `None` where no estimate applies (`eta = 1`).
    pub envelope: Vec<Option<(f64, f64)>>,
}

/// Evaluates the energies of `solver` at `times` on slices of `cells` cells.
///
/// The envelope is the sharp mode-based estimate when `modes` is given, the
/// ratio estimate from `E_v(0)` otherwise, and the undamped bounds at `eta = 0`.
pub fn energy_trace<S: FieldSolver + ?Sized>(
    solver: &S,
    times: &[f64],
    cells: usize,
    modes: Option<&ModeSet>,
) -> Result<EnergyTrace> {
    if times
        .windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::InvalidInput(
            "trace times must be strictly increasing".into(),
        ));
    }
    let params = *solver.params();
    let rows: Vec<(f64, f64, Option<f64>)> = times
        .par_iter()
        .map(|&t| {
            let slice = solver.slice(t, cells)?;
            let e = usual_energy(&slice);
            let cal = conserved_energy(&slice, params.speed);
            let s = if params.is_damped() {
                Some(weighted_invariant(&slice, &params)?)
            } else {
                None
            };
            Ok((e, cal, s))
        })
        .collect::<Result<Vec<_>>>()?;

    let e: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let cal_e = params
        .is_undamped()
        .then(|| rows.iter().map(|r| r.1).collect());
    let s = params
        .is_damped()
        .then(|| rows.iter().map(|r| r.2.unwrap_or(f64::NAN)).collect());

    let e0 = match times.first() {
        Some(&0.0) => e[0],
        _ => usual_energy(&solver.slice(0.0, cells)?),
    };
    let constants = match modes {
        Some(ms) if params.is_damped() => Some(decay_constants(ms)?),
        _ => None,
    };
    let envelope = times
        .iter()
        .map(|&t| {
            if params.is_undamped() {
                Some(undamped_bounds(e0, &params))
            } else if params.is_damped() {
                match &constants {
                    Some(c) => Some((c.lower(t), c.upper(t))),
                    None => envelope_bounds(e0, t, &params, EnvelopeVariant::MinMaxRatio).ok(),
                }
            } else {
                None
            }
        })
        .collect();
    Ok(EnergyTrace {
        params,
        times: times.to_vec(),
        e,
        cal_e,
        s,
        envelope,
    })
}

/// Least-squares fit of `ln E` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub fitted_rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub theory_rate: Option<f64>,
    pub samples: usize,
}

impl DecayFit {
    pub fn relative_error(&self) -> Option<f64> {
        self.theory_rate
            .filter(|&r| r > 0.0)
            .map(|r| (self.fitted_rate - r).abs() / r)
    }
}

/// Ordinary least squares on `(t, ln y)`, skipping non-positive samples.
pub fn fit_log_linear(times: &[f64], values: &[f64]) -> Result<(f64, f64, f64, usize)> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, y)| t.is_finite() && y.is_finite() && **y > 0.0)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    let n = pts.len();
    if n < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: n,
        });
    }
    let nf = n as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InvalidInput(
            "fit needs distinct sample times".into(),
        ));
    }
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok((slope, intercept, r2, n))
}

/// Fits the decay rate over samples with `t >= t_start`.
pub fn fit_decay_rate_from(trace: &EnergyTrace, t_start: f64) -> Result<DecayFit> {
    let (t, e): (Vec<f64>, Vec<f64>) = trace
        .times
        .iter()
        .zip(&trace.e)
        .filter(|(t, _)| **t >= t_start)
        .map(|(&t, &e)| (t, e))
        .unzip();
    let (slope, intercept, r_squared, samples) = fit_log_linear(&t, &e)?;
    Ok(DecayFit {
        fitted_rate: -slope,
        intercept,
        r_squared,
        theory_rate: trace.params.decay_rate(),
        samples,
    })
}

/// Fits the decay rate, excluding the initial transient `[0, T_v/2)`.
pub fn fit_decay_rate(trace: &EnergyTrace) -> Result<DecayFit> {
    fit_decay_rate_from(trace, 0.5 * trace.params.period())
}

/// Boundary-trace integrals of `phi_x^2` over one round trip `[0, T_v]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservabilityIntegrals {
    /// `(1/v^2) int_0^T phi_x^2(v t, t) dt`
    pub damped_end: f64,
    /// `int_0^T phi_x^2(L + v t, t) dt`
    pub clamped_end: f64,
    /// Conserved energy at `t = 0`.
    pub energy: f64,
}

impl ObservabilityIntegrals {
    /// `4 calE(0) / (1 - v^2)^2`, the common value of both integrals.
    pub fn identity_value(&self, v: f64) -> f64 {
        4.0 * self.energy / (1.0 - v * v).powi(2)
    }
}

/// Integrates the boundary traces of `solver` on `samples` uniform time cells.
pub fn observability_integrals<S: FieldSolver + ?Sized>(
    solver: &S,
    samples: usize,
    cells: usize,
) -> Result<ObservabilityIntegrals> {
    let p = *solver.params();
    if !p.is_undamped() {
        return Err(Error::InvalidInput(
            "the boundary observability identity holds for the undamped string only".into(),
        ));
    }
    if !(p.speed > 0.0 && p.speed < 1.0) {
        return Err(Error::ParameterDomain(format!(
            "the boundary observability identity requires 0 < v < 1, got v = {}",
            p.speed
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two time cells".into()));
    }
    let period = p.period();
    let dt = period / samples as f64;
    let traces: Vec<(f64, f64)> = (0..=samples)
        .into_par_iter()
        .map(|k| {
            let t = if k == samples { period } else { k as f64 * dt };
            let left = solver.point(p.speed * t, t)?.phi_x;
            let right = solver.point(p.length + p.speed * t, t)?.phi_x;
            Ok((left * left, right * right))
        })
        .collect::<Result<Vec<_>>>()?;
    let (left, right): (Vec<f64>, Vec<f64>) = traces.into_iter().unzip();
    let energy = conserved_energy(&solver.slice(0.0, cells)?, p.speed);
    Ok(ObservabilityIntegrals {
        damped_end: trapezoid(&left, dt) / (p.speed * p.speed),
        clamped_end: trapezoid(&right, dt),
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn slice_from(t: f64, grid: UniformGrid, f: impl Fn(f64) -> (f64, f64)) -> FieldSlice {
        let (phi_x, phi_t) = grid.nodes().into_iter().map(f).unzip();
        FieldSlice {
            t,
            grid,
            phi: vec![0.0; grid.len()],
            phi_x,
            phi_t,
        }
    }

    #[test]
    fn zero_slice_has_zero_energies() {
        let g = UniformGrid::new(0.0, 1.0, 10);
        let s = slice_from(0.0, g, |_| (0.0, 0.0));
        let p = StringParams::new(1.0, 0.2, 0.5).unwrap();
        assert_eq!(usual_energy(&s), 0.0);
        assert_eq!(conserved_energy(&s, 0.2), 0.0);
        assert_eq!(weighted_invariant(&s, &p).unwrap(), 0.0);
    }

    #[test]
    fn cos_mode_energy() {
        let g = UniformGrid::new(0.0, 1.0, 4096);
        let s = slice_from(0.0, g, |x| (-(PI / 2.0) * (PI * x / 2.0).sin(), 0.0));
        assert_abs_diff_eq!(usual_energy(&s), PI * PI / 16.0, epsilon = 1e-7);
        assert_abs_diff_eq!(conserved_energy(&s, 0.0), PI * PI / 16.0, epsilon = 1e-7);
    }

    #[test]
    fn conserved_equals_usual_without_travel() {
        let g = UniformGrid::new(0.3, 1.3, 100);
        let s = slice_from(0.0, g, |x| (x.sin(), x.cos() * 2.0));
        assert_abs_diff_eq!(conserved_energy(&s, 0.0), usual_energy(&s), epsilon = 1e-14);
    }

    #[test]
    fn sharp_equality_for_single_travelling_wave() {
        let g = UniformGrid::new(0.0, 1.0, 256);
        for v in [0.1, 0.5, 0.8] {
            let plus = slice_from(0.0, g, |x| ((3.0 * x).sin(), (3.0 * x).sin()));
            assert_abs_diff_eq!(
                usual_energy(&plus) * (1.0 + v),
                conserved_energy(&plus, v),
                epsilon = 1e-12
            );
            let minus = slice_from(0.0, g, |x| ((3.0 * x).sin(), -(3.0 * x).sin()));
            assert_abs_diff_eq!(
                usual_energy(&minus) * (1.0 - v),
                conserved_energy(&minus, v),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn weighted_invariant_requires_damping() {
        let g = UniformGrid::new(0.0, 1.0, 10);
        let s = slice_from(0.0, g, |_| (1.0, 0.0));
        for eta in [0.0, 1.0] {
            let p = StringParams::new(1.0, 0.2, eta).unwrap();
            assert!(weighted_invariant(&s, &p).is_err());
            assert!(envelope_bounds(1.0, 0.0, &p, EnvelopeVariant::SpeedFactor).is_err());
            assert!(decay_constants_from_sum(1.0, &p).is_err());
        }
    }

    #[test]
    fn constants_without_travel() {
        let p = StringParams::new(1.0, 0.0, 0.5).unwrap();
        let c = decay_constants_from_sum(0.7, &p).unwrap();
        assert_abs_diff_eq!(c.m1, 2.0 * 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(c.m2, 9.0 * 2.0 * 0.7, epsilon = 1e-12);
        let (lo, hi) = envelope_bounds(2.0, 0.0, &p, EnvelopeVariant::SpeedFactor).unwrap();
        assert_abs_diff_eq!(lo, 2.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(hi, 18.0, epsilon = 1e-12);
        let (lo4, hi4) = envelope_bounds(2.0, 0.0, &p, EnvelopeVariant::MinMaxRatio).unwrap();
        assert_abs_diff_eq!(lo4, lo, epsilon = 1e-14);
        assert_abs_diff_eq!(hi4, hi, epsilon = 1e-12);
    }

    #[test]
    fn min_factor_example() {
        let p = StringParams::new(1.0, 0.5, 1.0 / 3.0).unwrap();
        let (lo, _) = min_max_factors(&p).unwrap();
        assert_abs_diff_eq!(lo, 2f64.powf(1.5) * 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(lo, std::f64::consts::SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn speed_factor_at_time_zero() {
        let p = StringParams::new(1.0, 0.4, 0.25).unwrap();
        let g = p.gamma_eta().unwrap();
        let gv = p.gamma_v();
        let (lo, hi) = envelope_bounds(3.0, 0.0, &p, EnvelopeVariant::SpeedFactor).unwrap();
        assert_abs_diff_eq!(lo, 3.0 / (g * g * gv), epsilon = 1e-13);
        assert_abs_diff_eq!(hi, 3.0 * g * g * gv, epsilon = 1e-12);
    }

    #[test]
    fn fit_exact_exponential() {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
        let (slope, intercept, r2, n) = fit_log_linear(&t, &e).unwrap();
        assert_abs_diff_eq!(slope, -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, 3f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);
        assert_eq!(n, 40);
    }

    #[test]
    fn fit_modulated_exponential() {
        // three and a bit periods of cos(5t)
        let t: Vec<f64> = (0..400).map(|k| k as f64 * 4.0 / 399.0).collect();
        let e: Vec<f64> = t
            .iter()
            .map(|t| (-2.0 * t).exp() * (2.0 + (5.0 * t).cos()))
            .collect();
        let (slope, _, r2, _) = fit_log_linear(&t, &e).unwrap();
        assert!((1.9..=2.1).contains(&-slope), "rate {}", -slope);
        assert!((0.0..=1.0).contains(&r2));
    }

    #[test]
    fn fit_skips_non_positive_and_needs_eight() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let mut e: Vec<f64> = t.iter().map(|t| (-t).exp()).collect();
        e[3] = 0.0;
        e[4] = -1.0;
        let (slope, _, _, n) = fit_log_linear(&t, &e).unwrap();
        assert_eq!(n, 8);
        assert_abs_diff_eq!(slope, -1.0, epsilon = 1e-12);
        e[5] = 0.0;
        assert!(matches!(
            fit_log_linear(&t, &e),
            Err(Error::InsufficientSamples { got: 7, .. })
        ));
    }

    proptest! {
        #[test]
        fn min_max_ratio_inside_speed_factor(v in 0.0f64..0.95, eta in 0.01f64..10.0, t in 0.0f64..20.0, e0 in 0.0f64..5.0) {
            prop_assume!((eta - 1.0).abs() > 1e-6);
            let p = StringParams::new(1.0, v, eta).unwrap();
            let (lo4, hi4) = envelope_bounds(e0, t, &p, EnvelopeVariant::MinMaxRatio).unwrap();
            let (lo5, hi5) = envelope_bounds(e0, t, &p, EnvelopeVariant::SpeedFactor).unwrap();
            prop_assert!(lo5 <= lo4 * (1.0 + 1e-12) && hi4 <= hi5 * (1.0 + 1e-12));
            let c = decay_constants_from_sum(1.0, &p).unwrap();
            prop_assert!(c.m1 <= c.m2);
            prop_assert!(c.m1_simple <= c.m1 * (1.0 + 1e-12) && c.m2 <= c.m2_simple * (1.0 + 1e-12));
        }

        #[test]
        fn inlet_rate_is_even_in_speed(v in 0.0f64..0.95, eta in 0.01f64..10.0) {
            prop_assume!((eta - 1.0).abs() > 1e-6);
            let out = StringParams::new(1.0, v, eta).unwrap();
            let inl = StringParams::inlet_damped(1.0, v, eta).unwrap();
            prop_assert_eq!(out.decay_rate(), inl.decay_rate());
        }
    }
}
