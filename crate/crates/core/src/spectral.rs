//! Closed-form series solution.
//!
//! The solution is a superposition of complex exponentials
//!
//! ```text
//! phi(x, t) = sum_n a_n ( gamma_eta e^{(1-v) w_n (t+x) / L} + e^{(1+v) w_n (t-x) / L} )
//! ```
//!
//! with eigenvalues `w_n` whose real part `-ln|gamma_eta| / 2` is shared by all
//! modes. Coefficients are weighted Fourier coefficients of `phi0_x + phi1`
//! extended to `[0, L2]`, computed by direct trapezoid quadrature.
//!
//! Mode windows are closed under conjugation of `w_n`, so reconstructions of
//! real data are real up to rounding; the imaginary part is still checked.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldPoint, FieldSlice, FieldSolver};
use crate::grid::UniformGrid;
use crate::model::{ExtendedData, StringParams};

/// Default bound on `|Im| / scale` of reconstructed sums.
pub const DEFAULT_RESIDUE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `0 <= eta < 1`: `w_n = (2n+1) i pi / 2 - ln(gamma_eta) / 2`, `n = -N..N-1`.
    Sub,
    /// `eta > 1`: `w_n = n i pi - ln|gamma_eta| / 2`, `n = -N..=N`.
    Super,
}

impl Branch {
    pub fn for_damping(eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::ParameterDomain(format!(
                "damping factor must satisfy eta >= 0, got {eta}"
            )));
        }
        if eta == 1.0 {
            Err(Error::Transparent)
        } else if eta < 1.0 {
            Ok(Branch::Sub)
        } else {
            Ok(Branch::Super)
        }
    }

    /// Symmetric index window for truncation half-width `n`.
    pub fn indices(&self, n: usize) -> std::ops::RangeInclusive<i64> {
        let n = n as i64;
        match self {
            Branch::Sub => -n..=n - 1,
            Branch::Super => -n..=n,
        }
    }

    /// Index `m` with `w_m = conj(w_n)`.
    pub fn conjugate_index(&self, n: i64) -> i64 {
        match self {
            Branch::Sub => -n - 1,
            Branch::Super => -n,
        }
    }

    fn frequency(&self, n: i64) -> f64 {
        match self {
            Branch::Sub => (n as f64 + 0.5) * PI,
            Branch::Super => n as f64 * PI,
        }
    }
}

/// The eigenvalue `w_n` for damping factor `eta`.
pub fn omega(n: i64, eta: f64) -> Result<Complex64> {
    let branch = Branch::for_damping(eta)?;
    let gamma = (1.0 + eta) / (1.0 - eta);
    Ok(Complex64::new(-0.5 * gamma.abs().ln(), branch.frequency(n)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mode {
    pub index: i64,
    pub omega: Complex64,
    pub coeff: Complex64,
}

/// Truncated family of eigenvalues and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    branch: Branch,
    half_width: usize,
    modes: Vec<Mode>,
    params: StringParams,
    residue_tolerance: f64,
}

/// Computes `a_n = 1/(4 gamma_eta w_n) * int_0^L2 (phi0_x + phi1) e^{-(1-v) w_n x / L} dx`
/// for every `n` in the branch window of half-width `half_width`.
pub fn compute_coefficients(
    ext: &ExtendedData,
    params: &StringParams,
    half_width: usize,
) -> Result<ModeSet> {
    let branch = Branch::for_damping(params.damping)?;
    if half_width < 1 {
        return Err(Error::InvalidInput(
            "truncation half-width N must be >= 1".into(),
        ));
    }
    let l2 = params.extended_length();
    if ext.grid.start != 0.0 || (ext.grid.end - l2).abs() > 1e-9 * l2 {
        return Err(Error::GridMismatch(format!(
            "extended data cover [{}, {}] but L2 = {l2}",
            ext.grid.start, ext.grid.end
        )));
    }
    let gamma = params.gamma_eta().ok_or(Error::Transparent)?;
    let (l, v) = (params.length, params.speed);
    let log_gamma = gamma.abs().ln();
    let h = ext.grid.spacing();
    let cells = ext.grid.cells;

    // Real part of the kernel is mode-independent: fold it into the weights.
    let weights: Vec<f64> = ext
        .characteristic_sum()
        .into_iter()
        .enumerate()
        .map(|(j, psi)| {
            let x = ext.grid.node(j);
            let trap = if j == 0 || j == cells { 0.5 * h } else { h };
            trap * psi * ((1.0 - v) * 0.5 * log_gamma * x / l).exp()
        })
        .collect();
    let nodes = ext.grid.nodes();

    let modes: Vec<Mode> = branch
        .indices(half_width)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|n| {
            let w = Complex64::new(-0.5 * log_gamma, branch.frequency(n));
            let theta = (1.0 - v) * w.im / l;
            let (mut re, mut im) = (0.0, 0.0);
            for (wj, &x) in weights.iter().zip(&nodes) {
                let (s, c) = (theta * x).sin_cos();
                re += wj * c;
                im -= wj * s;
            }
            let integral = Complex64::new(re, im);
            Mode {
                index: n,
                omega: w,
                coeff: integral / (4.0 * gamma * w),
            }
        })
        .collect();

    Ok(ModeSet {
        branch,
        half_width,
        modes,
        params: *params,
        residue_tolerance: DEFAULT_RESIDUE_TOLERANCE,
    })
}

/// Right-hand side of the weighted Parseval identity at `t = 0`:
/// `L / (8 (1-v) gamma_eta^2) * int_0^L2 e^{(1-v) ln|gamma_eta| x / L} (phi0_x + phi1)^2 dx`.
pub fn parseval_weighted_integral(ext: &ExtendedData, params: &StringParams) -> Result<f64> {
    let gamma = params.gamma_eta().ok_or(Error::Transparent)?;
    let (l, v) = (params.length, params.speed);
    let lg = gamma.abs().ln();
    let integrand: Vec<f64> = ext
        .characteristic_sum()
        .into_iter()
        .enumerate()
        .map(|(j, psi)| ((1.0 - v) * lg * ext.grid.node(j) / l).exp() * psi * psi)
        .collect();
    Ok(l / (8.0 * (1.0 - v) * gamma * gamma) * ext.grid.trapezoid(&integrand))
}

/// `sum_j w_j e^{i f_j y_k}` for `y_k = y0 + k dy`, `k = 0..count`, for two weight
/// vectors sharing the frequencies `f`, term by term.
#[cfg(test)]
fn modal_sums(
    wa: &[Complex64],
    wc: &[Complex64],
    freqs: &[f64],
    y0: f64,
    dy: f64,
    count: usize,
) -> Vec<(Complex64, Complex64)> {
    (0..count)
        .map(|k| {
            let y = y0 + k as f64 * dy;
            wa.iter().zip(wc).zip(freqs).fold(
                (Complex64::default(), Complex64::default()),
                |(sa, sc), ((&a, &c), &f)| {
                    let (s, co) = (f * y).sin_cos();
                    let p = Complex64::new(co, s);
                    (sa + a * p, sc + c * p)
                },
            )
        })
        .collect()
}

/// The sums of [`modal_sums`] for equally spaced frequencies `f_j = f0 + j df`,
/// by a chirp-z transform. With `theta = df dy`,
///
/// ```text
/// sum_j u_j e^{i theta j k} = e^{i theta k^2/2} sum_j (u_j e^{i theta j^2/2}) e^{-i theta (k-j)^2/2}
/// ```
///
/// is a linear convolution, evaluated with FFTs of length `>= m + count - 1`.
fn chirp_sums(
    wa: &[Complex64],
    wc: &[Complex64],
    f0: f64,
    df: f64,
    y0: f64,
    dy: f64,
    count: usize,
) -> Vec<(Complex64, Complex64)> {
    let m = wa.len();
    if m == 0 || count == 0 {
        return vec![(Complex64::default(), Complex64::default()); count];
    }
    let size = (m + count - 1).next_power_of_two();
    let theta = df * dy;
    let chirp = |q: usize| {
        let (s, c) = (0.5 * theta * (q * q) as f64).sin_cos();
        Complex64::new(c, s)
    };
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let mut kernel = vec![Complex64::default(); size];
    for (d, slot) in kernel.iter_mut().enumerate().take(count) {
        *slot = chirp(d).conj();
    }
    for d in 1..m {
        kernel[size - d] = chirp(d).conj();
    }
    forward.process(&mut kernel);

    let pre: Vec<Complex64> = (0..m)
        .map(|j| {
            let (s, c) = ((f0 + j as f64 * df) * y0).sin_cos();
            Complex64::new(c, s) * chirp(j)
        })
        .collect();
    let convolve = |w: &[Complex64]| {
        let mut x = vec![Complex64::default(); size];
        for ((slot, &wj), &p) in x.iter_mut().zip(w).zip(&pre) {
            *slot = wj * p;
        }
        forward.process(&mut x);
        for (a, b) in x.iter_mut().zip(&kernel) {
            *a *= b;
        }
        inverse.process(&mut x);
        x
    };
    let (sa, sc) = (convolve(wa), convolve(wc));
    let scale = 1.0 / size as f64;
    (0..count)
        .map(|k| {
            let (s, c) = (f0 * k as f64 * dy).sin_cos();
            let post = Complex64::new(c, s) * chirp(k) * scale;
            (sa[k] * post, sc[k] * post)
        })
        .collect()
}

impl ModeSet {
    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn params_snapshot(&self) -> &StringParams {
        &self.params
    }

    pub fn residue_tolerance(&self) -> f64 {
        self.residue_tolerance
    }

    pub fn with_residue_tolerance(mut self, tolerance: f64) -> Self {
        self.residue_tolerance = tolerance;
        self
    }

    pub fn coefficient(&self, n: i64) -> Option<Complex64> {
        let first = *self.branch.indices(self.half_width).start();
        let k = n - first;
        (k >= 0 && (k as usize) < self.modes.len()).then(|| self.modes[k as usize].coeff)
    }

    fn gamma(&self) -> f64 {
        self.params
            .gamma_eta()
            .expect("mode sets are never transparent")
    }

    /// `c_n = (1-v) gamma_eta w_n a_n / L`, the coefficients of `phi_x` and `phi_t`.
    pub fn gradient_coefficients(&self) -> Vec<Complex64> {
        let (l, v, g) = (self.params.length, self.params.speed, self.gamma());
        self.modes
            .iter()
            .map(|m| (1.0 - v) * g * m.omega * m.coeff / l)
            .collect()
    }

    /// `sum_n |w_n a_n|^2`.
    pub fn parseval_weighted_sum(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| (m.omega * m.coeff).norm_sqr())
            .sum()
    }

    /// `sum_n |(2n+1) a_n|^2`, the mode energy of the undamped string.
    pub fn odd_weighted_sum(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| ((2 * m.index + 1) as f64 * m.coeff.norm()).powi(2))
            .sum()
    }

    /// Largest `|a_m - conj(a_n)| / max|a|` over conjugate pairs `w_m = conj(w_n)`.
    pub fn conjugate_mismatch(&self) -> f64 {
        let scale = self
            .modes
            .iter()
            .map(|m| m.coeff.norm())
            .fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        self.modes
            .iter()
            .filter_map(|m| {
                self.coefficient(self.branch.conjugate_index(m.index))
                    .map(|c| (c - m.coeff.conj()).norm())
            })
            .fold(0.0, f64::max)
            / scale
    }

    /// Real part of the exponential envelopes `(e^{(1-v) Re w (t+x)/L}, e^{(1+v) Re w (t-x)/L})`.
    fn envelopes(&self, x: f64, t: f64) -> (f64, f64) {
        let (l, v) = (self.params.length, self.params.speed);
        let re = self.modes.first().map_or(0.0, |m| m.omega.re);
        (
            ((1.0 - v) * re * (t + x) / l).exp(),
            ((1.0 + v) * re * (t - x) / l).exp(),
        )
    }

    /// Field at one point, with the largest relative imaginary residue.
    pub fn evaluate_with_residue(&self, x: f64, t: f64) -> Result<(FieldPoint, f64)> {
        self.params.check_in_interval(x, t)?;
        let (l, v, g) = (self.params.length, self.params.speed, self.gamma());
        let r = self.params.gamma_v() / g;
        let (mut phi, mut fwd, mut bwd) = (
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        );
        let (mut scale_a, mut scale_c) = (0.0, 0.0);
        let (ea, eb) = self.envelopes(x, t);
        for (m, c) in self.modes.iter().zip(self.gradient_coefficients()) {
            let pa = Complex64::new(0.0, (1.0 - v) * m.omega.im * (t + x) / l).exp() * ea;
            let pb = Complex64::new(0.0, (1.0 + v) * m.omega.im * (t - x) / l).exp() * eb;
            phi += m.coeff * (g * pa + pb);
            fwd += c * pa;
            bwd += c * pb;
            scale_a += m.coeff.norm();
            scale_c += c.norm();
        }
        let phi_x = fwd - r * bwd;
        let phi_t = fwd + r * bwd;
        let sa = scale_a * (g.abs() * ea + eb);
        let sc = scale_c * (ea + r.abs() * eb);
        let residue = rel(phi.im, sa)
            .max(rel(phi_x.im, sc))
            .max(rel(phi_t.im, sc));
        Ok((
            FieldPoint {
                phi: phi.re,
                phi_x: phi_x.re,
                phi_t: phi_t.re,
            },
            residue,
        ))
    }

    /// `(phi, phi_x, phi_t)` at `(x, t)` from the truncated series.
    pub fn evaluate(&self, x: f64, t: f64) -> Result<FieldPoint> {
        let (p, residue) = self.evaluate_with_residue(x, t)?;
        self.check_residue(residue)?;
        Ok(p)
    }

    /// `phi_x + phi_t` evaluated through the single forward-characteristic
    /// series `2 sum c_n e^{(1-v) w_n (t+x)/L}`.
    pub fn forward_characteristic_sum(&self, x: f64, t: f64) -> f64 {
        let (l, v) = (self.params.length, self.params.speed);
        self.modes
            .iter()
            .zip(self.gradient_coefficients())
            .map(|(m, c)| 2.0 * c * ((1.0 - v) * m.omega * (t + x) / l).exp())
            .sum::<Complex64>()
            .re
    }

    fn check_residue(&self, residue: f64) -> Result<()> {
        if residue > self.residue_tolerance {
            return Err(Error::ImaginaryResidue {
                residue,
                tolerance: self.residue_tolerance,
            });
        }
        Ok(())
    }

    /// Slice on `cells` uniform cells over the moving interval, with the
    /// largest relative imaginary residue over the slice.
    pub fn slice_with_residue(&self, t: f64, cells: usize) -> Result<(FieldSlice, f64)> {
        if cells < 1 {
            return Err(Error::InvalidInput("slice needs at least one cell".into()));
        }
        let (left, right) = self.params.interval_at(t)?;
        let grid = UniformGrid::new(left, right, cells);
        let h = grid.spacing();
        let (l, v, g) = (self.params.length, self.params.speed, self.gamma());
        let r = self.params.gamma_v() / g;
        let coeffs: Vec<Complex64> = self.modes.iter().map(|m| m.coeff).collect();
        let grads = self.gradient_coefficients();
        let scale_a: f64 = coeffs.iter().map(|c| c.norm()).sum();
        let scale_c: f64 = grads.iter().map(|c| c.norm()).sum();

        // consecutive modes are pi apart in Im w
        let w0 = self.modes[0].omega.im;
        let n = grid.len();
        let (fa, fb) = ((1.0 - v) / l, (1.0 + v) / l);
        let sums_a = chirp_sums(&coeffs, &grads, fa * w0, fa * PI, t + left, h, n);
        let sums_b = chirp_sums(&coeffs, &grads, fb * w0, fb * PI, t - left, -h, n);

        let mut slice = FieldSlice {
            t,
            grid,
            phi: Vec::with_capacity(n),
            phi_x: Vec::with_capacity(n),
            phi_t: Vec::with_capacity(n),
        };
        let mut residue = 0.0_f64;
        for (j, ((aa, ca), (ab, cb))) in sums_a.into_iter().zip(sums_b).enumerate() {
            let (ea, eb) = self.envelopes(grid.node(j), t);
            let phi = g * ea * aa + eb * ab;
            let phi_x = ea * ca - r * eb * cb;
            let phi_t = ea * ca + r * eb * cb;
            let sa = scale_a * (g.abs() * ea + eb);
            let sc = scale_c * (ea + r.abs() * eb);
            residue = residue
                .max(rel(phi.im, sa))
                .max(rel(phi_x.im, sc))
                .max(rel(phi_t.im, sc));
            slice.phi.push(phi.re);
            slice.phi_x.push(phi_x.re);
            slice.phi_t.push(phi_t.re);
        }
        // the last node is the clamped end; it is exact only up to rounding
        Ok((slice, residue))
    }
}

fn rel(value: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        value.abs()
    } else {
        value.abs() / scale
    }
}

impl FieldSolver for ModeSet {
    fn params(&self) -> &StringParams {
        &self.params
    }

    fn point(&self, x: f64, t: f64) -> Result<FieldPoint> {
        self.evaluate(x, t)
    }

    fn slice(&self, t: f64, cells: usize) -> Result<FieldSlice> {
        let (s, residue) = self.slice_with_residue(t, cells)?;
        self.check_residue(residue)?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{extend_initial_data, InitialData, Preset};
    use approx::assert_abs_diff_eq;

    #[test]
    fn chirp_sums_match_direct_sums() {
        use rand::{rngs::StdRng, Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        for &(m, count, f0, df, y0, dy) in &[
            (8, 5, -3.5 * PI, PI, 0.3, 0.01),
            (64, 129, -31.5 * 0.7 * PI, 0.7 * PI, 2.4, -1.0 / 128.0),
            (33, 300, -16.0 * PI, 1.3 * PI, 7.9, 0.003),
        ] {
            let mut w = || -> Vec<Complex64> {
                (0..m)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            };
            let (wa, wc) = (w(), w());
            let freqs: Vec<f64> = (0..m).map(|j| f0 + j as f64 * df).collect();
            let direct = modal_sums(&wa, &wc, &freqs, y0, dy, count);
            let fast = chirp_sums(&wa, &wc, f0, df, y0, dy, count);
            for (d, f) in direct.iter().zip(&fast) {
                assert!((d.0 - f.0).norm() < 1e-11 * m as f64, "{d:?} {f:?}");
                assert!((d.1 - f.1).norm() < 1e-11 * m as f64);
            }
        }
    }

    fn cos_modes(v: f64, eta: f64, cells: usize, n: usize) -> (StringParams, InitialData, ModeSet) {
        let p = StringParams::new(1.0, v, eta).unwrap();
        let d = InitialData::from_preset(Preset::Cos, &p, cells).unwrap();
        let ext = extend_initial_data(&d, &p).unwrap();
        let ms = compute_coefficients(&ext, &p, n).unwrap();
        (p, d, ms)
    }

    #[test]
    fn omega_examples() {
        assert_abs_diff_eq!(omega(0, 0.0).unwrap().re, 0.0);
        assert_abs_diff_eq!(omega(0, 0.0).unwrap().im, PI / 2.0, epsilon = 1e-15);
        let w = omega(0, 1.0 / 3.0).unwrap();
        assert_abs_diff_eq!(w.re, -0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(w.im, PI / 2.0, epsilon = 1e-15);
        let w = omega(2, 3.0).unwrap();
        assert_abs_diff_eq!(w.re, -0.5 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(w.im, 2.0 * PI, epsilon = 1e-15);
        assert!(matches!(omega(0, 1.0), Err(Error::Transparent)));
        assert!(omega(0, -0.5).is_err());
    }

    #[test]
    fn exp_two_omega_is_minus_inverse_gamma() {
        for eta in [0.0, 0.2, 0.7, 1.5, 4.0] {
            let g = (1.0 + eta) / (1.0 - eta);
            for n in -3..=3 {
                let e = (2.0 * omega(n, eta).unwrap()).exp();
                assert_abs_diff_eq!(e.re, -1.0 / g, epsilon = 1e-12);
                assert_abs_diff_eq!(e.im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn windows_are_conjugation_closed() {
        for b in [Branch::Sub, Branch::Super] {
            let idx: Vec<i64> = b.indices(5).collect();
            for &n in &idx {
                assert!(idx.contains(&b.conjugate_index(n)));
            }
        }
        assert_eq!(Branch::Sub.indices(3).count(), 6);
        assert_eq!(Branch::Super.indices(3).count(), 7);
    }

    #[test]
    fn zero_data_give_zero_modes_and_field() {
        let p = StringParams::new(1.0, 0.3, 0.5).unwrap();
        let g = UniformGrid::new(0.0, 1.0, 64);
        let d = InitialData::new(g, vec![0.0; 65], vec![0.0; 65]).unwrap();
        let ms = compute_coefficients(&extend_initial_data(&d, &p).unwrap(), &p, 8).unwrap();
        assert!(ms.modes().iter().all(|m| m.coeff == Complex64::default()));
        assert_eq!(ms.parseval_weighted_sum(), 0.0);
        let f = ms.evaluate(0.5, 0.3).unwrap();
        assert_eq!((f.phi, f.phi_x, f.phi_t), (0.0, 0.0, 0.0));
    }

    #[test]
    fn fundamental_mode_coefficients() {
        let (_, _, ms) = cos_modes(0.0, 0.0, 2048, 8);
        for m in ms.modes() {
            let expected = if m.index == 0 || m.index == -1 {
                0.25
            } else {
                0.0
            };
            assert_abs_diff_eq!(m.coeff.re, expected, epsilon = 1e-6);
            assert_abs_diff_eq!(m.coeff.im, 0.0, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(ms.parseval_weighted_sum(), PI * PI / 32.0, epsilon = 1e-5);
        let f = ms.evaluate(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(f.phi, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn rejects_transparent_and_bad_width() {
        let p = StringParams::new(1.0, 0.3, 1.0).unwrap();
        let g = UniformGrid::new(0.0, 1.0, 8);
        let d = InitialData::new(g, vec![0.0; 9], vec![0.0; 9]).unwrap();
        let q = StringParams::new(1.0, 0.3, 0.5).unwrap();
        let ext = extend_initial_data(&d, &q).unwrap();
        assert!(matches!(
            compute_coefficients(&ext, &p, 4),
            Err(Error::Transparent)
        ));
        assert!(matches!(
            compute_coefficients(&ext, &q, 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn evaluate_rejects_points_off_the_string() {
        let (_, _, ms) = cos_modes(0.5, 0.2, 128, 16);
        assert!(matches!(
            ms.evaluate(0.1, 1.0),
            Err(Error::OutsideInterval { .. })
        ));
        assert!(matches!(
            ms.evaluate(1.6, 1.0),
            Err(Error::OutsideInterval { .. })
        ));
        assert!(ms.evaluate(0.5, 1.0).is_ok());
    }

    #[test]
    fn clamped_end_is_zero() {
        for (v, eta) in [(0.0, 0.0), (0.4, 0.3), (0.2, 2.5)] {
            let (p, _, ms) = cos_modes(v, eta, 512, 64);
            for k in 0..30 {
                let t = 3.0 * p.period() * k as f64 / 29.0;
                let f = ms.evaluate(p.length + v * t, t).unwrap();
                assert!(f.phi.abs() < 1e-10, "phi at clamped end = {}", f.phi);
            }
        }
    }

    #[test]
    fn damped_end_condition_holds() {
        for (v, eta) in [(0.0, 0.5), (0.3, 0.0), (0.45, 0.7), (0.2, 3.0)] {
            let (p, _, ms) = cos_modes(v, eta, 512, 64);
            for k in 0..20 {
                let t = 2.0 * p.period() * k as f64 / 19.0;
                let f = ms.evaluate(v * t, t).unwrap();
                let bc = (1.0 - eta * v) * f.phi_x - (eta - v) * f.phi_t;
                assert!(bc.abs() < 1e-10, "boundary residual {bc}");
            }
        }
    }

    #[test]
    fn slice_matches_pointwise_evaluation() {
        let (p, _, ms) = cos_modes(0.35, 0.6, 256, 40);
        let t = 0.37 * p.period();
        let (s, residue) = ms.slice_with_residue(t, 300).unwrap();
        assert!(residue < 1e-12);
        for j in (0..=300).step_by(37) {
            let f = ms.evaluate(s.grid.node(j), t).unwrap();
            assert_abs_diff_eq!(s.phi[j], f.phi, epsilon = 1e-12);
            assert_abs_diff_eq!(s.phi_x[j], f.phi_x, epsilon = 1e-11);
            assert_abs_diff_eq!(s.phi_t[j], f.phi_t, epsilon = 1e-11);
        }
    }

    #[test]
    fn forward_characteristic_series_matches_gradient_sum() {
        let (p, _, ms) = cos_modes(0.25, 3.0, 256, 32);
        for &(xf, tf) in &[(0.1, 0.0), (0.5, 0.4), (0.9, 1.3)] {
            let t = tf * p.period();
            let x = p.speed * t + xf * p.length;
            let f = ms.evaluate(x, t).unwrap();
            assert_abs_diff_eq!(
                ms.forward_characteristic_sum(x, t),
                f.phi_x + f.phi_t,
                epsilon = 1e-12
            );
        }
    }
}
