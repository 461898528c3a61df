//! Physical parameters, derived constants, initial data and its extension to
//! the doubled interval `[0, L2]`.
//!
//! Coordinates are those of the travelling frame: the string occupies the
//! moving interval `(v t, L + v t)`, the dashpot acts at the left end `x = v t`
//! and the right end `x = L + v t` is clamped.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{derivative, UniformGrid};

/// Length, axial speed and damping factor of the string.
///
/// The axial speed is normalised by the wave speed. Ordinary construction
/// requires `0 <= v < 1`; [`StringParams::inlet_damped`] produces the mirrored
/// configuration with the dashpot at the inlet, represented by a negative speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StringParams {
    pub length: f64,
    pub speed: f64,
    pub damping: f64,
}

/// Constants that depend only on [`StringParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub gamma_v: f64,
    /// `None` in the transparent case `eta = 1`.
    pub gamma_eta: Option<f64>,
    pub extended_length: f64,
    pub period: f64,
    /// `None` in the transparent case `eta = 1`.
    pub decay_rate: Option<f64>,
}

impl StringParams {
    pub fn new(length: f64, speed: f64, damping: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::ParameterDomain(format!(
                "string length L must be positive, got {length}"
            )));
        }
        if !(speed.is_finite() && (0.0..1.0).contains(&speed)) {
            return Err(Error::ParameterDomain(format!(
                "axial speed must satisfy 0 <= v < 1 (subcritical, wave speed normalised to 1), got {speed}"
            )));
        }
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(Error::ParameterDomain(format!(
                "damping factor must satisfy eta >= 0, got {damping}"
            )));
        }
        Ok(Self {
            length,
            speed,
            damping,
        })
    }

    /// Dashpot at the inlet: same string with the travelling direction reversed.
    pub fn inlet_damped(length: f64, speed: f64, damping: f64) -> Result<Self> {
        let mut p = Self::new(length, speed, damping)?;
        p.speed = -speed;
        Ok(p)
    }

    pub fn is_transparent(&self) -> bool {
        self.damping == 1.0
    }

    pub fn is_undamped(&self) -> bool {
        self.damping == 0.0
    }

    /// `eta > 0` and `eta != 1`: the exponentially decaying regime.
    pub fn is_damped(&self) -> bool {
        self.damping > 0.0 && !self.is_transparent()
    }

    pub fn gamma_v(&self) -> f64 {
        (1.0 + self.speed) / (1.0 - self.speed)
    }

    pub fn gamma_eta(&self) -> Option<f64> {
        (!self.is_transparent()).then(|| (1.0 + self.damping) / (1.0 - self.damping))
    }

    /// `ln |gamma_eta|`, zero for the undamped string.
    pub fn log_gamma_eta(&self) -> Option<f64> {
        self.gamma_eta().map(|g| g.abs().ln())
    }

    /// `L2 = 2L / (1 - v)`.
    pub fn extended_length(&self) -> f64 {
        2.0 * self.length / (1.0 - self.speed)
    }

    /// Round-trip time `T_v = 2L / (1 - v^2)`.
    pub fn period(&self) -> f64 {
        2.0 * self.length / (1.0 - self.speed * self.speed)
    }

    /// `(1 - v^2) ln|gamma_eta| / L`.
    pub fn decay_rate(&self) -> Option<f64> {
        self.log_gamma_eta()
            .map(|lg| (1.0 - self.speed * self.speed) * lg / self.length)
    }

    /// Multiplier picked up by `f'` per quasi-period: `-1/gamma_eta`, written
    /// so that it stays finite (and zero) at `eta = 1`.
    pub fn reflection(&self) -> f64 {
        -(1.0 - self.damping) / (1.0 + self.damping)
    }

    /// Image of `x` in `[L, L2]` under the extension map, in `[0, L]`.
    pub fn mapped_argument(&self, x: f64) -> f64 {
        2.0 * self.length / (1.0 + self.speed) - x / self.gamma_v()
    }

    pub fn constants(&self) -> DerivedConstants {
        DerivedConstants {
            gamma_v: self.gamma_v(),
            gamma_eta: self.gamma_eta(),
            extended_length: self.extended_length(),
            period: self.period(),
            decay_rate: self.decay_rate(),
        }
    }

    /// The moving interval `(v t, L + v t)`.
    pub fn interval_at(&self, t: f64) -> Result<(f64, f64)> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let left = self.speed * t;
        Ok((left, left + self.length))
    }

    /// Errors unless `x` lies in the closed moving interval (up to rounding).
    pub(crate) fn check_in_interval(&self, x: f64, t: f64) -> Result<()> {
        let (left, right) = self.interval_at(t)?;
        let slack = 1e-12 * (self.length + right.abs());
        if x < left - slack || x > right + slack || x.is_nan() {
            return Err(Error::OutsideInterval { x, t, left, right });
        }
        Ok(())
    }
}

/// Validates and returns every derived constant in one step.
pub fn derive_constants(length: f64, speed: f64, damping: f64) -> Result<DerivedConstants> {
    Ok(StringParams::new(length, speed, damping)?.constants())
}

/// Closed-form initial shapes. Each describes a string released from rest in
/// the fixed frame, so `phi1 = -v phi0_x` in the travelling frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// `cos(pi x / 2L)`: the fundamental mode of the undamped, non-travelling string.
    Cos,
    /// `(4 (x-a)(b-x) / (b-a)^2)^4` on `(L/4, 3L/4)`, zero elsewhere.
    Bump,
    /// Hat function on `(L/4, 3L/4)` with unit peak. Not smooth.
    Triangle,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Cos, Preset::Bump, Preset::Triangle];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Cos => "cos",
            Preset::Bump => "bump",
            Preset::Triangle => "triangle",
        }
    }

    /// Displacement and its exact slope at `x` for a string of length `length`.
    pub fn profile(&self, x: f64, length: f64) -> (f64, f64) {
        match self {
            Preset::Cos => {
                let k = PI / (2.0 * length);
                ((k * x).cos(), -k * (k * x).sin())
            }
            Preset::Bump => {
                let (a, b) = (0.25 * length, 0.75 * length);
                if x <= a || x >= b {
                    return (0.0, 0.0);
                }
                let w2 = (b - a) * (b - a);
                let q = 4.0 * (x - a) * (b - x) / w2;
                let dq = 4.0 * (a + b - 2.0 * x) / w2;
                (q.powi(4), 4.0 * q.powi(3) * dq)
            }
            Preset::Triangle => {
                let (a, m, b) = (0.25 * length, 0.5 * length, 0.75 * length);
                if x <= a || x >= b {
                    (0.0, 0.0)
                } else if x <= m {
                    ((x - a) / (m - a), 1.0 / (m - a))
                } else {
                    ((b - x) / (b - m), -1.0 / (b - m))
                }
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown preset '{s}', expected one of cos, bump, triangle"
                ))
            })
    }
}

/// Sampled `(phi0, phi1)` on `[0, L]` together with the finite-difference
/// slope `phi0_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    grid: UniformGrid,
    phi0: Vec<f64>,
    phi1: Vec<f64>,
    dphi0: Vec<f64>,
    preset: Option<Preset>,
}

impl InitialData {
    /// Builds initial data from samples on `grid`, checking the clamped end.
    pub fn new(grid: UniformGrid, phi0: Vec<f64>, phi1: Vec<f64>) -> Result<Self> {
        if grid.start != 0.0 {
            return Err(Error::GridMismatch(format!(
                "initial data must start at x = 0, got {}",
                grid.start
            )));
        }
        if grid.cells < 2 {
            return Err(Error::GridMismatch("need at least three samples".into()));
        }
        if phi0.len() != grid.len() || phi1.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "grid has {} nodes but phi0 has {} and phi1 has {}",
                grid.len(),
                phi0.len(),
                phi1.len()
            )));
        }
        if phi0.iter().chain(&phi1).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite initial data sample".into()));
        }
        let scale = phi0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tolerance = 1e-12 * scale + 1e-14;
        let end = phi0[grid.cells].abs();
        if end > tolerance {
            return Err(Error::Compatibility {
                value: end,
                tolerance,
            });
        }
        let dphi0 = derivative(&phi0, grid.spacing());
        Ok(Self {
            grid,
            phi0,
            phi1,
            dphi0,
            preset: None,
        })
    }

    /// Builds initial data from explicit abscissae, which must be uniform.
    pub fn from_samples(x: &[f64], phi0: Vec<f64>, phi1: Vec<f64>) -> Result<Self> {
        let grid = uniform_grid_from(x)?;
        Self::new(grid, phi0, phi1)
    }

    /// Samples a named preset on `cells` uniform cells over `[0, L]`.
    pub fn from_preset(preset: Preset, params: &StringParams, cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidInput(
                "preset grid needs at least two cells".into(),
            ));
        }
        let grid = UniformGrid::new(0.0, params.length, cells);
        let (phi0, phi1): (Vec<f64>, Vec<f64>) = grid
            .nodes()
            .into_iter()
            .map(|x| {
                let (p, dp) = preset.profile(x, params.length);
                (p, -params.speed * dp)
            })
            .unzip();
        let mut data = Self::new(grid, phi0, phi1)?;
        data.preset = Some(preset);
        Ok(data)
    }

    /// Reads a CSV with header `x,phi0,phi1` and rows in increasing `x`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "phi0", "phi1"] {
            return Err(Error::InvalidInput(format!(
                "initial-data CSV header must be 'x,phi0,phi1', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let (mut x, mut phi0, mut phi1) = (Vec::new(), Vec::new(), Vec::new());
        for record in rdr.deserialize() {
            let (xi, p0, p1): (f64, f64, f64) = record?;
            x.push(xi);
            phi0.push(p0);
            phi1.push(p1);
        }
        Self::from_samples(&x, phi0, phi1)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn length(&self) -> f64 {
        self.grid.end
    }

    pub fn cells(&self) -> usize {
        self.grid.cells
    }

    pub fn x(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    pub fn phi0(&self) -> &[f64] {
        &self.phi0
    }

    pub fn phi1(&self) -> &[f64] {
        &self.phi1
    }

    /// Finite-difference `phi0_x` on the data grid.
    pub fn dphi0(&self) -> &[f64] {
        &self.dphi0
    }

    pub fn preset(&self) -> Option<Preset> {
        self.preset
    }

    /// Errors if the data were sampled for a different string length.
    pub(crate) fn check_length(&self, params: &StringParams) -> Result<()> {
        if (self.length() - params.length).abs() > 1e-9 * params.length {
            return Err(Error::GridMismatch(format!(
                "initial data cover [0, {}] but L = {}",
                self.length(),
                params.length
            )));
        }
        Ok(())
    }
}

fn uniform_grid_from(x: &[f64]) -> Result<UniformGrid> {
    if x.len() < 3 {
        return Err(Error::GridMismatch("need at least three samples".into()));
    }
    if x.windows(2)
        .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::GridMismatch(
            "abscissae must be strictly increasing".into(),
        ));
    }
    let cells = x.len() - 1;
    let (start, end) = (x[0], x[cells]);
    let h = (end - start) / cells as f64;
    let worst = x
        .iter()
        .enumerate()
        .map(|(j, &xj)| (xj - (start + j as f64 * h)).abs())
        .fold(0.0, f64::max);
    if worst > 1e-6 * h {
        return Err(Error::GridMismatch(format!(
            "abscissae are not uniform (deviation {worst:e} with spacing {h:e})"
        )));
    }
    if start.abs() > 1e-9 * (end - start) {
        return Err(Error::GridMismatch(format!(
            "first abscissa must be 0, got {start}"
        )));
    }
    Ok(UniformGrid::new(0.0, end, cells))
}

/// Converts fixed-frame data `(u0, u1)` to travelling-frame data.
///
/// With `s = L - x + v t` the displacement is mirrored, `phi0(x) = u0(L - x)`,
/// and `phi1 = u1(L - x) - v phi0_x`.
pub fn transform_from_fixed_frame(
    grid: UniformGrid,
    u0: &[f64],
    u1: &[f64],
    params: &StringParams,
) -> Result<InitialData> {
    if u0.len() != u1.len() || u0.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "u0 has {} samples, u1 has {}, grid has {} nodes",
            u0.len(),
            u1.len(),
            grid.len()
        )));
    }
    let phi0: Vec<f64> = u0.iter().rev().copied().collect();
    let dphi0 = derivative(&phi0, grid.spacing());
    let phi1: Vec<f64> = u1
        .iter()
        .rev()
        .zip(&dphi0)
        .map(|(u, d)| u - params.speed * d)
        .collect();
    InitialData::new(grid, phi0, phi1)
}

/// `phi0_x` and `phi1` lifted from `[0, L]` to `[0, L2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedData {
    pub grid: UniformGrid,
    pub dphi0: Vec<f64>,
    pub phi1_ext: Vec<f64>,
}

impl ExtendedData {
    /// `phi0_x + phi1` on the extended grid, i.e. twice `f'`.
    pub fn characteristic_sum(&self) -> Vec<f64> {
        self.dphi0
            .iter()
            .zip(&self.phi1_ext)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Number of extended cells so the spacing does not exceed the data spacing.
pub(crate) fn extended_cells(data_cells: usize, params: &StringParams) -> usize {
    let ratio = params.extended_length() / params.length;
    let raw = data_cells as f64 * ratio;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 * raw {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// Lifts samples of `phi0_x` and `phi1` on `grid` (covering `[0, L]`) to a
/// uniform grid with `cells` cells over `[0, L2]`.
///
/// On `(L, L2]` the values follow the odd, dilated reflection
/// `phi0_x -> phi0_x(m(x)) / gamma_v` and `phi1 -> -phi1(m(x)) / gamma_v` with
/// `m(x) = 2L/(1+v) - x/gamma_v`.
pub fn extend_samples(
    grid: &UniformGrid,
    dphi0: &[f64],
    phi1: &[f64],
    params: &StringParams,
    cells: usize,
) -> ExtendedData {
    let ext = UniformGrid::new(0.0, params.extended_length(), cells);
    let gv = params.gamma_v();
    let (d, p): (Vec<f64>, Vec<f64>) = ext
        .nodes()
        .into_iter()
        .map(|x| {
            if x <= params.length {
                (grid.interpolate(dphi0, x), grid.interpolate(phi1, x))
            } else {
                let m = params.mapped_argument(x);
                (
                    grid.interpolate(dphi0, m) / gv,
                    -grid.interpolate(phi1, m) / gv,
                )
            }
        })
        .unzip();
    ExtendedData {
        grid: ext,
        dphi0: d,
        phi1_ext: p,
    }
}

/// Extends initial data to `[0, L2]` at (at least) the data resolution.
pub fn extend_initial_data(data: &InitialData, params: &StringParams) -> Result<ExtendedData> {
    data.check_length(params)?;
    let cells = extended_cells(data.cells(), params);
    Ok(extend_samples(
        data.grid(),
        data.dphi0(),
        data.phi1(),
        params,
        cells,
    ))
}
