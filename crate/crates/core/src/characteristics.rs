//! D'Alembert solver: `phi = f(t + x) + g(t - x)` with the densities `f'`, `g'`
//! built from the initial data and continued by the two boundary relations.
//!
//! At the clamped end `g'(y) = -gamma_v f'(gamma_v y + L2)`, and at the dashpot
//! end `g'(z) = (gamma_v / gamma_eta) f'(gamma_v z)`. Together they give the
//! quasi-periodicity `f'(xi + L2) = rho f'(xi)` with `rho = -1/gamma_eta`.
//! Only `f'` on `[0, L2)` and `g'` on `[-L, 0]` are tabulated.
//!
//! Unlike the series solver this handles `eta = 1`, where `rho = 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{FieldPoint, FieldSlice, FieldSolver};
use crate::grid::UniformGrid;
use crate::model::{InitialData, StringParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacteristicDensities {
    params: StringParams,
    grid: UniformGrid,
    /// `f'(xi) = (phi1 + phi0_x)(xi) / 2` on the data grid.
    forward: Vec<f64>,
    /// `g'(-xi) = (phi1 - phi0_x)(xi) / 2` on the data grid.
    backward: Vec<f64>,
    rho: f64,
}

pub fn build_densities(
    data: &InitialData,
    params: &StringParams,
) -> Result<CharacteristicDensities> {
    data.check_length(params)?;
    let (forward, backward) = data
        .phi1()
        .iter()
        .zip(data.dphi0())
        .map(|(p1, d0)| (0.5 * (p1 + d0), 0.5 * (p1 - d0)))
        .unzip();
    Ok(CharacteristicDensities {
        params: *params,
        grid: *data.grid(),
        forward,
        backward,
        rho: params.reflection(),
    })
}

impl CharacteristicDensities {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `f'` on one quasi-period `[0, L2)`.
    fn fprime_base(&self, r: f64) -> f64 {
        let p = &self.params;
        if r <= p.length {
            self.grid.interpolate(&self.forward, r)
        } else {
            // g' at (r - L2)/gamma_v in [-L, 0), continued through the clamped end
            let s = (p.extended_length() - r) / p.gamma_v();
            -self.grid.interpolate(&self.backward, s) / p.gamma_v()
        }
    }

    /// `f'(xi)` for `xi >= 0`, reduced modulo `L2` with the half-open
    /// convention `[k L2, (k+1) L2)`; each reduction contributes a factor `rho`.
    pub fn eval_fprime(&self, xi: f64) -> f64 {
        assert!(xi >= 0.0, "f' is only defined for xi >= 0, got {xi}");
        let l2 = self.params.extended_length();
        let mut k = (xi / l2).floor();
        let mut r = xi - k * l2;
        if r >= l2 {
            k += 1.0;
            r -= l2;
        } else if r < 0.0 {
            k -= 1.0;
            r += l2;
        }
        if k == 0.0 {
            return self.fprime_base(r);
        }
        let m = self.rho.powi(k as i32);
        if m == 0.0 {
            0.0
        } else {
            m * self.fprime_base(r)
        }
    }

    /// `g'(zeta)` for `zeta >= -L`.
    pub fn eval_gprime(&self, zeta: f64) -> Result<f64> {
        let p = &self.params;
        if zeta < -p.length * (1.0 + 1e-12) || zeta.is_nan() {
            return Err(Error::OutsideDependence(zeta));
        }
        if zeta <= 0.0 {
            return Ok(self.grid.interpolate(&self.backward, -zeta));
        }
        // gamma_v / gamma_eta == -gamma_v * rho, finite at eta = 1
        let factor = -p.gamma_v() * self.rho;
        if factor == 0.0 {
            return Ok(0.0);
        }
        Ok(factor * self.eval_fprime(p.gamma_v() * zeta))
    }

    /// `(phi_x, phi_t) = (f'(t+x) - g'(t-x), f'(t+x) + g'(t-x))`.
    pub fn oracle_field(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        self.params.check_in_interval(x, t)?;
        let f = self.eval_fprime((t + x).max(0.0));
        let g = self.eval_gprime(t - x)?;
        Ok((f - g, f + g))
    }

    /// Samples `(phi_x, phi_t)` on `cells` cells over the moving interval and
    /// recovers `phi` by integrating `phi_x` from the clamped end.
    pub fn oracle_slice(&self, t: f64, cells: usize) -> Result<FieldSlice> {
        if cells < 2 {
            return Err(Error::InvalidInput(
                "oracle slice needs at least two cells".into(),
            ));
        }
        let (left, right) = self.params.interval_at(t)?;
        let grid = UniformGrid::new(left, right, cells);
        let (phi_x, phi_t): (Vec<f64>, Vec<f64>) = grid
            .nodes()
            .into_iter()
            .map(|x| {
                let x = x.clamp(left, right);
                self.oracle_field(x, t)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let h = grid.spacing();
        let mut phi = vec![0.0; grid.len()];
        for j in (0..cells).rev() {
            phi[j] = phi[j + 1] - 0.5 * h * (phi_x[j] + phi_x[j + 1]);
        }
        Ok(FieldSlice {
            t,
            grid,
            phi,
            phi_x,
            phi_t,
        })
    }
}

impl FieldSolver for CharacteristicDensities {
    fn params(&self) -> &StringParams {
        &self.params
    }

    /// `phi` at a single point needs the integral from the clamped end, so it
    /// is recovered from a slice with the data resolution.
    fn point(&self, x: f64, t: f64) -> Result<FieldPoint> {
        let (phi_x, phi_t) = self.oracle_field(x, t)?;
        let right = self.params.length + self.params.speed * t;
        let cells = ((right - x) / self.grid.spacing()).ceil().max(1.0) as usize;
        let mut phi = 0.0;
        if right > x {
            let h = (right - x) / cells as f64;
            let mut prev = self.oracle_field(right, t)?.0;
            for k in 1..=cells {
                let xk = if k == cells { x } else { right - k as f64 * h };
                let cur = self.oracle_field(xk, t)?.0;
                phi -= 0.5 * h * (prev + cur);
                prev = cur;
            }
        }
        Ok(FieldPoint { phi, phi_x, phi_t })
    }

    fn slice(&self, t: f64, cells: usize) -> Result<FieldSlice> {
        self.oracle_slice(t, cells)
    }
}
